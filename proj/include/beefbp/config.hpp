#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "beefbp/bees.hpp"
#include "beefbp/density.hpp"
#include "beefbp/error.hpp"
#include "beefbp/io.hpp"
#include "beefbp/measure.hpp"

namespace beefbp {

enum class ExperimentKind {
  solve,
  density,
  simulate,
  stationarity,
  rate_upper,
  rate_lower,
  boundary_conv,
  compare_bees,
  mass_doubling,
  kernel_suite,
};

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::solve: return "solve";
    case ExperimentKind::density: return "density";
    case ExperimentKind::simulate: return "simulate";
    case ExperimentKind::stationarity: return "stationarity";
    case ExperimentKind::rate_upper: return "rate_upper";
    case ExperimentKind::rate_lower: return "rate_lower";
    case ExperimentKind::boundary_conv: return "boundary_conv";
    case ExperimentKind::compare_bees: return "compare_bees";
    case ExperimentKind::mass_doubling: return "mass_doubling";
    case ExperimentKind::kernel_suite: return "kernel_suite";
  }
  return "?";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (int k = 0; k <= static_cast<int>(ExperimentKind::kernel_suite); ++k)
    if (to_string(static_cast<ExperimentKind>(k)) == s) return static_cast<ExperimentKind>(k);
  throw DomainError("unknown experiment '" + s + "'");
}

struct SolverConfig {
  /// 0 selects the default extent max(support radius, R_inf) + 3.
  double x_max = 0.0;
  double spacing = 2.5e-3;
  double delta = 1e-3;
  double T = 1.0;
  std::size_t snapshot_every = 0;
  std::vector<double> snapshot_times;
  double contact_tol_upper = 1e-8;
  /// Values <= 0 select the clip level 1 - e^{-delta} of the lower iteration.
  double contact_tol_lower = 1e-8;
  std::string scheme = "split";
  double penalty_n = 64.0;
  double penalized_dt = 1e-3;
  double quad_tol = 1e-2;
  double tail_tol = 1e-12;
  double max_gap = std::numeric_limits<double>::infinity();

  double lower_tol() const { return contact_tol_lower > 0.0 ? contact_tol_lower : -std::expm1(-delta); }
};

struct SimulatorConfig {
  std::size_t N = 2000;
  std::size_t replicas = 1;
  std::vector<double> observation_times{1.0};
  /// Optional [start, end] over which ensemble statistics are time-averaged.
  std::vector<double> average_window;
  std::string order = "duplicate_then_remove";
  double branching_rate = 1.0;
};

struct DensityConfig {
  double t = 1.0;
  std::size_t n_paths = 100000;
  double dt = 1e-4;
  std::string layout = "radial";
  double extent = 3.0;
  std::size_t cells = 60;
  /// constant | solver | file
  std::string boundary = "constant";
  double boundary_radius = 10.0;
  std::string boundary_file;
  std::string boundary_column = "R_upper";
  bool bridge_correction = true;
};

struct DoublingConfig {
  double c0 = 0.25;
  double max_t1 = 10.0;
  int shifts = 3;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::solve;
  int dim = 1;
  InitialMeasure initial = InitialMeasure::constant_one(1);
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  SolverConfig solver{};
  SimulatorConfig simulator{};
  DensityConfig density{};
  DoublingConfig doubling{};
  /// Fit or observation window [start, end].
  std::vector<double> window{1.0, 3.5};
  /// Time from which boundary_conv checks |R_t - R_inf|, and the snapshot time of
  /// the contact second difference.
  double t_from = 6.0;
  double t_contact = 6.0;
  std::map<std::string, double> tolerances;
};

/// Declared tolerances per experiment; a config may override any of them.
inline std::map<std::string, double> default_tolerances(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::solve: return {{"certificate_slack", 2.0}, {"cross_sup", 5e-3}};
    case ExperimentKind::density: return {{"mass_abs", 0.02}, {"stderr_multiple", 3.0}};
    case ExperimentKind::simulate: return {};
    case ExperimentKind::stationarity: return {{"certificate_slack", 2.0}, {"sup_error", 5e-3}};
    case ExperimentKind::rate_upper:
      return {{"certificate_slack", 2.0}, {"floor_factor", 5.0}, {"rate_rel", 0.10}};
    case ExperimentKind::rate_lower: return {{"certificate_slack", 2.0}, {"envelope_factor", 1.2}, {"above_V", 1e-9}};
    case ExperimentKind::boundary_conv:
      return {{"certificate_slack", 2.0}, {"radius_abs", 0.01}, {"contact_lo", -1.1}, {"contact_hi", -0.9}};
    case ExperimentKind::compare_bees:
      return {{"cdf_sup", 0.05}, {"radius_abs", 0.1}, {"avg_cdf_sup", 0.05}, {"avg_radius_abs", 0.1}};
    case ExperimentKind::mass_doubling: return {{"max_c", 0.01}};
    case ExperimentKind::kernel_suite: return {{"y_integral", 1e-6}, {"images", 1e-8}};
  }
  return {};
}

namespace detail {

// Reads fields of one JSON object and rejects keys that were never asked for.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw DomainError(where_ + ": expected a JSON object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key, double def) {
    if (!has(key)) return def;
    const Json& v = j_.at(key);
    if (v.is_string()) return parse_double(v.get<std::string>());
    if (!v.is_number()) throw DomainError(where_ + "." + key + ": expected a number");
    return v.get<double>();
  }

  template <class T>
  T get(const std::string& key, T def) {
    if (!has(key)) return def;
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw DomainError(where_ + "." + key + ": " + e.what());
    }
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> def) {
    if (!has(key)) return def;
    const Json& v = j_.at(key);
    if (!v.is_array()) throw DomainError(where_ + "." + key + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (x.is_string()) out.push_back(parse_double(x.get<std::string>()));
      else if (x.is_number()) out.push_back(x.get<double>());
      else throw DomainError(where_ + "." + key + ": expected an array of numbers");
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw DomainError(where_ + ": unknown key '" + key + "'");
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

/// Initial measure from {"kind": ..., "params": {...}} or with the parameters inline.
inline InitialMeasure parse_initial(const Json& j, int dim) {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
    throw DomainError("initial: expected an object with a string 'kind'");
  const auto kind = measure_kind_from_string(j.at("kind").get<std::string>());
  Json flat = j;
  flat.erase("kind");
  if (flat.contains("params")) {
    if (flat.size() != 1) throw DomainError("initial: give parameters either inline or under 'params', not both");
    const Json params = flat.at("params");
    flat = params;
  }
  detail::ObjectReader p(flat, "initial.params");
  InitialMeasure m;
  switch (kind) {
    case MeasureKind::uniform_ball: m = InitialMeasure::uniform_ball(dim, p.number("radius", 1.0)); break;
    case MeasureKind::sphere_shell: m = InitialMeasure::sphere_shell(dim, p.number("radius", 1.0)); break;
    case MeasureKind::constant_one: m = InitialMeasure::constant_one(dim); break;
    case MeasureKind::steady_V: m = InitialMeasure::steady_V(dim); break;
    case MeasureKind::indicator_step: {
      const double c = p.number("c", 0.5);
      m = InitialMeasure::indicator_step(dim, c, p.number("K", 1.0));
      break;
    }
    case MeasureKind::table: {
      auto xs = p.numbers("x", {});
      m = InitialMeasure::table(dim, std::move(xs), p.numbers("v", {}));
      break;
    }
  }
  p.finish();
  return m;
}

inline Json initial_to_json(const InitialMeasure& m) {
  Json params = Json::object();
  switch (m.kind) {
    case MeasureKind::uniform_ball:
    case MeasureKind::sphere_shell: params["radius"] = m.radius; break;
    case MeasureKind::indicator_step:
      params["c"] = m.c;
      params["K"] = m.K;
      break;
    case MeasureKind::table:
      params["x"] = m.table_x;
      params["v"] = m.table_v;
      break;
    default: break;
  }
  return Json{{"kind", to_string(m.kind)}, {"params", params}};
}

inline SelectionOrder selection_order_from_string(const std::string& s) {
  if (s == "duplicate_then_remove") return SelectionOrder::duplicate_then_remove;
  if (s == "remove_then_duplicate") return SelectionOrder::remove_then_duplicate;
  throw DomainError("unknown selection order '" + s + "'");
}

inline DensityLayout density_layout_from_string(const std::string& s) {
  if (s == "box") return DensityLayout::box;
  if (s == "radial") return DensityLayout::radial;
  throw DomainError("unknown density layout '" + s + "'");
}

inline void validate(const ExperimentConfig& c) {
  detail::require(c.dim >= 1 && c.dim <= 10, "config: dim must lie in 1..10");
  const auto& s = c.solver;
  detail::require(s.x_max >= 0.0 && s.spacing > 0.0 && s.delta > 0.0 && s.T >= 0.0, "config.solver: bad grid or time");
  detail::require(s.scheme == "split" || s.scheme == "penalized" || s.scheme == "both",
                  "config.solver.scheme must be split, penalized or both");
  detail::require(s.penalty_n >= 2.0 && s.penalized_dt > 0.0, "config.solver: bad penalized settings");
  detail::require(s.quad_tol > 0.0 && s.tail_tol > 0.0 && s.tail_tol <= 1e-6, "config.solver: bad tolerances");
  detail::require(s.contact_tol_upper > 0.0, "config.solver.contact_tol_upper must be positive");
  const auto& b = c.simulator;
  detail::require(b.N >= 2 && b.replicas >= 1 && b.branching_rate >= 0.0, "config.simulator: bad N, replicas or rate");
  detail::require(b.average_window.empty() || b.average_window.size() == 2, "config.simulator.average_window needs 2 values");
  selection_order_from_string(b.order);
  const auto& d = c.density;
  density_layout_from_string(d.layout);
  detail::require(d.t > 0.0 && d.dt > 0.0 && d.n_paths > 0 && d.extent > 0.0 && d.cells > 0, "config.density: bad values");
  detail::require(d.boundary == "constant" || d.boundary == "solver" || d.boundary == "file",
                  "config.density.boundary must be constant, solver or file");
  detail::require(c.window.size() == 2 && c.window[0] < c.window[1], "config.window must be [start, end] with start < end");
  detail::require(c.doubling.c0 > 0.0 && c.doubling.c0 < 0.5 && c.doubling.max_t1 > 0.0 && c.doubling.shifts >= 0,
                  "config.doubling: need c0 in (0, 1/2), max_t1 > 0, shifts >= 0");
}

inline ExperimentConfig parse_config(const Json& j) {
  detail::ObjectReader r(j, "config");
  ExperimentConfig c;
  c.experiment = experiment_kind_from_string(r.get<std::string>("experiment", "solve"));
  c.dim = r.get<int>("dim", 1);
  detail::require(c.dim >= 1 && c.dim <= 10, "config: dim must lie in 1..10");
  c.initial = r.has("initial") ? parse_initial(r.raw("initial"), c.dim) : InitialMeasure::constant_one(c.dim);
  c.seed = r.get<std::uint64_t>("seed", 1);
  c.out_dir = r.get<std::string>("out_dir", "out");
  c.window = r.numbers("window", c.window);
  c.t_from = r.number("t_from", c.t_from);
  c.t_contact = r.number("t_contact", c.t_contact);

  if (r.has("solver")) {
    detail::ObjectReader s(r.raw("solver"), "solver");
    auto& o = c.solver;
    o.x_max = s.number("x_max", o.x_max);
    o.spacing = s.number("spacing", o.spacing);
    if (s.has("n_cells")) {
      const auto n = s.get<std::size_t>("n_cells", 0);
      detail::require(n > 0 && o.x_max > 0.0, "config.solver: n_cells requires an explicit x_max");
      o.spacing = o.x_max / static_cast<double>(n);
    }
    o.delta = s.number("delta", o.delta);
    o.T = s.number("T", o.T);
    o.snapshot_every = s.get<std::size_t>("snapshot_every", o.snapshot_every);
    o.snapshot_times = s.numbers("snapshot_times", o.snapshot_times);
    if (s.has("contact_tol")) o.contact_tol_upper = o.contact_tol_lower = s.number("contact_tol", 1e-8);
    o.contact_tol_upper = s.number("contact_tol_upper", o.contact_tol_upper);
    o.contact_tol_lower = s.number("contact_tol_lower", o.contact_tol_lower);
    o.scheme = s.get<std::string>("scheme", o.scheme);
    o.penalty_n = s.number("penalty_n", o.penalty_n);
    o.penalized_dt = s.number("penalized_dt", o.penalized_dt);
    o.quad_tol = s.number("quad_tol", o.quad_tol);
    o.tail_tol = s.number("tail_tol", o.tail_tol);
    o.max_gap = s.number("max_gap", o.max_gap);
    s.finish();
  }
  if (r.has("simulator")) {
    detail::ObjectReader s(r.raw("simulator"), "simulator");
    auto& o = c.simulator;
    o.N = s.get<std::size_t>("N", o.N);
    o.replicas = s.get<std::size_t>("replicas", o.replicas);
    if (s.has("T")) o.observation_times = {s.number("T", 1.0)};
    o.observation_times = s.numbers("observation_times", o.observation_times);
    o.average_window = s.numbers("average_window", o.average_window);
    o.order = s.get<std::string>("order", o.order);
    o.branching_rate = s.number("branching_rate", o.branching_rate);
    s.finish();
  }
  if (r.has("density")) {
    detail::ObjectReader s(r.raw("density"), "density");
    auto& o = c.density;
    o.t = s.number("t", o.t);
    o.n_paths = s.get<std::size_t>("n_paths", o.n_paths);
    o.dt = s.number("dt", o.dt);
    o.layout = s.get<std::string>("layout", o.layout);
    o.extent = s.number("extent", o.extent);
    o.cells = s.get<std::size_t>("cells", o.cells);
    o.boundary = s.get<std::string>("boundary", o.boundary);
    o.boundary_radius = s.number("boundary_radius", o.boundary_radius);
    o.boundary_file = s.get<std::string>("boundary_file", o.boundary_file);
    o.boundary_column = s.get<std::string>("boundary_column", o.boundary_column);
    o.bridge_correction = s.get<bool>("bridge_correction", o.bridge_correction);
    s.finish();
  }
  if (r.has("doubling")) {
    detail::ObjectReader s(r.raw("doubling"), "doubling");
    c.doubling.c0 = s.number("c0", c.doubling.c0);
    c.doubling.max_t1 = s.number("max_t1", c.doubling.max_t1);
    c.doubling.shifts = s.get<int>("shifts", c.doubling.shifts);
    s.finish();
  }
  c.tolerances = default_tolerances(c.experiment);
  if (r.has("tolerances")) {
    const Json& t = r.raw("tolerances");
    if (!t.is_object()) throw DomainError("config.tolerances: expected an object");
    for (const auto& [key, value] : t.items()) {
      if (!c.tolerances.count(key))
        throw DomainError("config.tolerances: '" + key + "' is not a tolerance of experiment " + to_string(c.experiment));
      if (!value.is_number()) throw DomainError("config.tolerances." + key + ": expected a number");
      c.tolerances[key] = value.get<double>();
    }
  }
  r.finish();
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DomainError("config " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

/// Every field written explicitly, defaults included.
inline Json config_to_json(const ExperimentConfig& c) {
  const auto& s = c.solver;
  const auto& b = c.simulator;
  const auto& d = c.density;
  Json tol = Json::object();
  for (const auto& [k, v] : c.tolerances) tol[k] = v;
  return Json{
      {"experiment", to_string(c.experiment)},
      {"dim", c.dim},
      {"initial", initial_to_json(c.initial)},
      {"seed", c.seed},
      {"out_dir", c.out_dir},
      {"window", c.window},
      {"t_from", c.t_from},
      {"t_contact", c.t_contact},
      {"solver",
       {{"x_max", s.x_max},
        {"spacing", s.spacing},
        {"delta", s.delta},
        {"T", s.T},
        {"snapshot_every", s.snapshot_every},
        {"snapshot_times", s.snapshot_times},
        {"contact_tol_upper", s.contact_tol_upper},
        {"contact_tol_lower", s.contact_tol_lower},
        {"scheme", s.scheme},
        {"penalty_n", s.penalty_n},
        {"penalized_dt", s.penalized_dt},
        {"quad_tol", s.quad_tol},
        {"tail_tol", s.tail_tol},
        {"max_gap", json_number(s.max_gap)}}},
      {"simulator",
       {{"N", b.N},
        {"replicas", b.replicas},
        {"observation_times", b.observation_times},
        {"average_window", b.average_window},
        {"order", b.order},
        {"branching_rate", b.branching_rate}}},
      {"density",
       {{"t", d.t},
        {"n_paths", d.n_paths},
        {"dt", d.dt},
        {"layout", d.layout},
        {"extent", d.extent},
        {"cells", d.cells},
        {"boundary", d.boundary},
        {"boundary_radius", d.boundary_radius},
        {"boundary_file", d.boundary_file},
        {"boundary_column", d.boundary_column},
        {"bridge_correction", d.bridge_correction}}},
      {"doubling", {{"c0", c.doubling.c0}, {"max_t1", c.doubling.max_t1}, {"shifts", c.doubling.shifts}}},
      {"tolerances", tol},
  };
}

}  // namespace beefbp
