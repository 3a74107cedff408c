#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "beefbp/density.hpp"
#include "beefbp/error.hpp"

namespace beefbp {

using Json = nlohmann::json;

/// Shortest round-trip decimal form; "inf", "-inf" and "nan" for non-finite values.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

/// JSON value for a double; non-finite values become the strings used in CSV output.
inline Json json_number(double x) { return std::isfinite(x) ? Json(x) : Json(format_double(x)); }

inline Json json_array(const std::vector<double>& xs) {
  Json a = Json::array();
  for (double x : xs) a.push_back(json_number(x));
  return a;
}

/// Comma-separated table with a header row and newline-terminated records.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
    detail::require(!header_.empty(), "CsvTable: header must not be empty");
  }

  void add_row(const std::vector<double>& row) {
    detail::require(row.size() == header_.size(), "CsvTable: row width does not match the header");
    rows_.push_back(row);
  }

  std::size_t rows() const noexcept { return rows_.size(); }

  std::string str() const {
    std::string out;
    for (std::size_t k = 0; k < header_.size(); ++k) out += (k ? "," : "") + header_[k];
    out += '\n';
    for (const auto& row : rows_) {
      for (std::size_t k = 0; k < row.size(); ++k) {
        if (k) out += ',';
        out += format_double(row[k]);
      }
      out += '\n';
    }
    return out;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<double>> rows_;
};

/// Parsed CSV: header names and numeric columns.
struct CsvData {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  const std::vector<double>& column(const std::string& name) const {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return columns[k];
    throw DomainError("CSV has no column '" + name + "'");
  }
};

inline double parse_double(std::string_view s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double x = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw DomainError("not a number: '" + std::string(s) + "'");
  return x;
}

inline CsvData parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  CsvData d;
  auto split = [](const std::string& l) {
    std::vector<std::string> f;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    return f;
  };
  if (!std::getline(in, line)) throw DomainError("CSV is empty");
  d.header = split(line);
  d.columns.resize(d.header.size());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != d.header.size()) throw DomainError("CSV line " + std::to_string(lineno) + " has the wrong width");
    for (std::size_t k = 0; k < f.size(); ++k) d.columns[k].push_back(parse_double(f[k]));
  }
  return d;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

/// JSON text with sorted keys and a trailing newline.
inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

/// 64-bit FNV-1a hash.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

/// Boundary path read from a boundary.csv written by the solver.
inline BoundaryPath read_boundary_csv(const std::filesystem::path& path, const std::string& column = "R_upper") {
  const auto data = parse_csv(read_file(path));
  std::vector<double> t, r;
  const auto& ts = data.column("t");
  const auto& rs = data.column(column);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    if (!std::isfinite(rs[k]) || rs[k] <= 0.0) continue;
    t.push_back(ts[k]);
    r.push_back(rs[k]);
  }
  if (t.empty()) throw DomainError("boundary file " + path.string() + " has no finite radii");
  return BoundaryPath(std::move(t), std::move(r));
}

}  // namespace beefbp
