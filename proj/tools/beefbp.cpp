#include <cstdio>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "beefbp/beefbp.hpp"

using namespace beefbp;

namespace {

// Experiments each subcommand may run; the first is used when the config names none.
std::vector<std::string> allowed_experiments(const std::string& cmd, const Json& j) {
  if (cmd == "solve") return {"solve"};
  if (cmd == "density") return {"density"};
  if (cmd == "simulate") return {"simulate"};
  if (cmd == "compare") return {"compare_bees"};
  if (cmd == "doubling") return {"mass_doubling"};
  if (cmd == "rates") {
    std::string kind;
    if (j.contains("initial") && j["initial"].is_object() && j["initial"].contains("kind"))
      kind = j["initial"]["kind"].get<std::string>();
    std::vector<std::string> out{"rate_upper", "rate_lower", "stationarity", "boundary_conv"};
    if (kind == "indicator_step") std::swap(out[0], out[1]);
    if (kind == "steady_V") std::swap(out[0], out[2]);
    return out;
  }
  return {};
}

int run_config(const std::string& cmd, const std::string& path, const std::optional<std::string>& out,
               const std::optional<std::uint64_t>& seed) {
  Json j = Json::parse(read_file(path));
  if (!j.is_object()) throw DomainError("config " + path + ": expected a JSON object");
  const auto allowed = allowed_experiments(cmd, j);
  if (!allowed.empty()) {
    if (!j.contains("experiment")) j["experiment"] = allowed.front();
    const auto name = j["experiment"].get<std::string>();
    if (std::find(allowed.begin(), allowed.end(), name) == allowed.end())
      throw DomainError("experiment '" + name + "' cannot be run by '" + cmd + "'");
  }
  if (out) j["out_dir"] = *out;
  if (seed) j["seed"] = *seed;
  const auto cfg = parse_config(j);
  const auto report = run_experiment(cfg);
  write_outputs(report, cfg.out_dir);
  std::cout << report.experiment << ": " << (report.passed() ? "PASS" : "FAIL");
  for (const auto& c : report.checks)
    std::cout << "\n  " << c.name << " = " << format_double(c.value) << " " << c.relation << " " << format_double(c.limit)
              << (c.pass ? "" : "  [fail]");
  if (!report.error.empty()) std::cout << "\n  error: " << report.error;
  std::cout << "\n  outputs in " << cfg.out_dir << " (" << format_double(std::round(report.seconds * 100) / 100)
            << " s)\n";
  return report.passed() ? 0 : 1;
}

int run_steady(int dim, const std::optional<std::string>& out, double spacing) {
  const auto s = compute_steady(dim);
  const Json j{{"dim", s.dim}, {"R_inf", s.R_inf}, {"Z", s.Z}, {"alpha", s.alpha}, {"lambda", s.lambda}, {"omega_d", s.omega_d}};
  std::cout << dump_json(j);
  if (out) {
    CsvTable tab({"x", "V", "U"});
    const auto grid = RadialGrid::with_spacing(s.R_inf + 1.0, spacing);
    for (double x : grid.nodes()) tab.add_row({x, eval_V(s, x), eval_U(s, x)});
    write_file(std::filesystem::path(*out) / "steady.csv", tab.str());
    write_file(std::filesystem::path(*out) / "steady.json", dump_json(j));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Brownian bees free boundary problem: obstacle solver, particle simulator and experiments"};
  app.require_subcommand(1);

  int dim = 1;
  double spacing = 0.01;
  std::optional<std::string> steady_out;
  auto* steady = app.add_subcommand("steady", "Print R_inf, Z, alpha, lambda and omega_d as JSON");
  steady->add_option("--dim", dim, "Dimension (1..10)")->required()->check(CLI::Range(1, 10));
  steady->add_option("--out", steady_out, "Also write steady.csv with x, V(x), U(x)");
  steady->add_option("--spacing", spacing, "Table spacing for steady.csv")->check(CLI::PositiveNumber);

  struct Args {
    std::string config;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
  };
  std::map<std::string, Args> args;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"solve", "Obstacle problem by splitting and/or penalization"},
      {"density", "Killed Brownian motion density"},
      {"simulate", "N-particle Brownian bees replicas"},
      {"rates", "Convergence experiments (rate_upper, rate_lower, stationarity, boundary_conv)"},
      {"compare", "Particle system against the obstacle solver"},
      {"doubling", "Mass doubling search for small indicator data"},
      {"run", "Any experiment named in the config"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    auto& a = args[name];
    sub->add_option("--config", a.config, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", a.out, "Output directory (overrides out_dir)");
    sub->add_option("--seed", a.seed, "Seed (overrides seed)");
  }

  CLI11_PARSE(app, argc, argv);
  try {
    if (steady->parsed()) return run_steady(dim, steady_out, spacing);
    for (const auto& [name, help] : commands)
      if (app.got_subcommand(name)) return run_config(name, args[name].config, args[name].out, args[name].seed);
  } catch (const std::exception& e) {
    std::cerr << "beefbp: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
