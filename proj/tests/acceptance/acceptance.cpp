// Acceptance suite: one PASS/FAIL line per criterion. `--criterion N` runs one.
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "beefbp/beefbp.hpp"

using namespace beefbp;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(4);
  s << x;
  return s.str();
}

RunReport run(const Json& j) { return run_experiment(parse_config(j)); }

const Check& need(const RunReport& r, const std::string& name) {
  if (const auto* c = r.find(name)) return *c;
  throw Error("report of " + r.experiment + " has no check '" + name + "'" + (r.error.empty() ? "" : ": " + r.error));
}

std::string describe(const Check& c) { return c.name + " " + fmt(c.value) + " " + c.relation + " " + fmt(c.limit); }

std::string failures(const RunReport& r) {
  std::string s;
  for (const auto& name : r.failing()) s += (s.empty() ? "" : ",") + name;
  if (!r.error.empty()) s += " (" + r.error + ")";
  return s;
}

Json stationarity_config() {
  return {{"experiment", "stationarity"},
          {"dim", 1},
          {"initial", {{"kind", "steady_V"}}},
          {"solver", {{"delta", 1e-3}, {"spacing", 2.5e-3}, {"T", 5.0}, {"snapshot_every", 100}}},
          {"tolerances", {{"sup_error", 5e-3}}}};
}

Json boundary_config() {
  return {{"experiment", "boundary_conv"},
          {"dim", 1},
          {"initial", {{"kind", "constant_one"}}},
          {"solver", {{"delta", 1e-4}, {"spacing", 1e-3}, {"T", 8.0}}},
          {"t_from", 6.0},
          {"t_contact", 6.0},
          {"tolerances", {{"radius_abs", 0.01}, {"contact_lo", -1.1}, {"contact_hi", -0.9}}}};
}

Json compare_d1_config() {
  return {{"experiment", "compare_bees"},
          {"dim", 1},
          {"initial", {{"kind", "uniform_ball"}, {"params", {{"radius", 1.0}}}}},
          {"seed", 2024},
          {"solver", {{"delta", 1e-3}, {"spacing", 2.5e-3}, {"T", 10.0}}},
          {"simulator", {{"N", 2000}, {"replicas", 20}, {"observation_times", {10.0}}}},
          {"tolerances", {{"cdf_sup", 0.05}, {"radius_abs", 0.1}}}};
}

// 1. Kernel identities on the 5x5x3 sweep, and the d=1 images forms.
Outcome criterion_1() {
  const auto r = run({{"experiment", "kernel_suite"}, {"tolerances", {{"y_integral", 1e-6}, {"images", 1e-8}}}});
  const bool fast = r.seconds < 5.0;
  return {r.passed() && fast, describe(need(r, "y_integral_identity")) + "; " + describe(need(r, "d1_images_agreement")) +
                                  "; runtime " + fmt(r.seconds) + " s < 5 s"};
}

// 2. Enclosure certificate at every step for solves in d = 1, 2, 3.
Outcome criterion_2() {
  bool ok = true;
  double worst = -1e300;
  int solves = 0;
  std::string bad;
  for (int d = 1; d <= 3; ++d)
    for (const Json& init : {Json{{"kind", "constant_one"}}, Json{{"kind", "uniform_ball"}, {"radius", 1.0}},
                             Json{{"kind", "indicator_step"}, {"c", 0.5}, {"K", 1.0}}, Json{{"kind", "steady_V"}}}) {
      const auto r = run({{"experiment", "solve"},
                          {"dim", d},
                          {"initial", init},
                          {"solver", {{"delta", 1e-3}, {"spacing", 5e-3}, {"T", 2.0}, {"scheme", "split"}}}});
      const auto& c = need(r, "enclosure_certificate");
      worst = std::max(worst, c.value - c.limit);
      ++solves;
      if (!r.passed()) {
        ok = false;
        bad += " d=" + std::to_string(d) + "/" + init["kind"].get<std::string>();
      }
    }
  return {ok, std::to_string(solves) + " solves; max over solves of (gap - bound - 2 defect) = " + fmt(worst) +
                  (bad.empty() ? "" : "; failing:" + bad)};
}

// 3. Stationarity from V.
Outcome criterion_3() {
  const auto r = run(stationarity_config());
  const bool fast = r.seconds < 60.0;
  return {r.passed() && fast, describe(need(r, "sup_upper_minus_V")) + "; runtime " + fmt(r.seconds) + " s < 60 s"};
}

// 4. Spectral-gap rate for d = 1 and d = 3.
Outcome criterion_4() {
  bool ok = true;
  std::string detail;
  const std::vector<std::tuple<int, double, double, double>> cases{{1, 1e-4, 2.5e-3, 0.10}, {3, 1e-3, 5e-3, 0.15}};
  for (const auto& [d, delta, h, rel] : cases) {
    const auto r = run({{"experiment", "rate_upper"},
                        {"dim", d},
                        {"initial", {{"kind", "constant_one"}}},
                        {"solver", {{"delta", delta}, {"spacing", h}, {"T", 4.0}}},
                        {"window", {1.0, 3.5}},
                        {"tolerances", {{"rate_rel", rel}}}});
    const bool fast = r.seconds < 300.0;
    ok = ok && r.passed() && fast;
    const double slope = r.metrics.value("slope_ref", std::nan(""));
    detail += (detail.empty() ? "" : "; ") + std::string("d=") + std::to_string(d) + " slope " + fmt(slope) + " vs " +
              fmt(-r.metrics.value("lambda", 0.0)) + " (" + describe(need(r, "rate_relative_error")) + ", V-based slope " +
              fmt(r.metrics.value("slope_V", std::nan(""))) + ", " + fmt(r.seconds) + " s)";
    if (!r.passed()) detail += " failing: " + failures(r);
  }
  return {ok, detail};
}

// 5. |R_t - pi/2| <= 0.01 for t >= 6 from v0 = 1.
Outcome criterion_5() {
  const auto r = run(boundary_config());
  const auto& c = need(r, "radius_after_t_from");
  const auto& cert = need(r, "enclosure_certificate");
  return {c.pass && cert.pass && r.error.empty(), describe(c) + " (R from the upper enclosure)"};
}

// 6. Lower 1/t envelopes for v0 = 0.5 1_{x>1}.
Outcome criterion_6() {
  const auto r = run({{"experiment", "rate_lower"},
                      {"dim", 1},
                      {"initial", {{"kind", "indicator_step"}, {"params", {{"c", 0.5}, {"K", 1.0}}}}},
                      {"solver", {{"delta", 1e-3}, {"spacing", 2.5e-3}, {"contact_tol_lower", 0.0}}},
                      {"window", {2.0, 20.0}},
                      {"tolerances", {{"envelope_factor", 1.2}}}});
  return {r.passed(), describe(need(r, "v_envelope_bounded")) + "; " + describe(need(r, "R_envelope_bounded")) +
                          (r.passed() ? "" : "; failing: " + failures(r))};
}

// 7. Splitting against penalization (n = 64) at t = 0.5, 1, 2 for d = 1, 3.
Outcome criterion_7() {
  bool ok = true;
  std::string detail;
  for (int d : {1, 3}) {
    auto cfg = [d](double n) {
      return Json{{"experiment", "solve"},
                  {"dim", d},
                  {"initial", {{"kind", "uniform_ball"}, {"radius", 1.0}}},
                  {"solver",
                   {{"delta", 1e-3},
                    {"spacing", 2.5e-3},
                    {"T", 2.0},
                    {"snapshot_times", {0.5, 1.0, 2.0}},
                    {"scheme", "both"},
                    {"penalty_n", n}}},
                  {"tolerances", {{"cross_sup", 5e-3}}}};
    };
    const auto r = run(cfg(64));
    const auto& c = need(r, "split_vs_penalized");
    ok = ok && c.pass;
    // Penalty bias diagnostic: the same comparison at n = 256.
    const auto r256 = run(cfg(256));
    detail += (detail.empty() ? "" : "; ") + std::string("d=") + std::to_string(d) + " " + describe(c) + " (n=256: " +
              fmt(need(r256, "split_vs_penalized").value) + ")";
  }
  return {ok, detail};
}

// 8. Contact second difference at t = 6 in criterion 5's run.
Outcome criterion_8() {
  const auto r = run(boundary_config());
  const auto& lo = need(r, "contact_second_difference_lo");
  const auto& hi = need(r, "contact_second_difference_hi");
  return {lo.pass && hi.pass && r.error.empty(), "second difference " + fmt(lo.value) + " at x = " +
                                                     fmt(r.metrics.value("contact_x", 0.0)) + ", required in [-1.1, -0.9]"};
}

// 9. Comparison principle on 20 random ordered pairs of monotone data.
Outcome criterion_9() {
  Rng rng = make_stream(9, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double delta = 2e-3, T = 1.0;
  double worst_field = -1e300, worst_radius = -1e300;
  for (int pair = 0; pair < 20; ++pair) {
    const int d = 1 + pair % 3;
    // Random non-decreasing v0b with values in [0,1], and v0a <= v0b by thinning its increments.
    const std::size_t knots = 8;
    std::vector<double> xs{0.0}, vb{0.0}, va{0.0};
    double total = 0.0;
    std::vector<double> inc(knots);
    for (auto& w : inc) total += (w = u(rng));
    const double scale = (0.3 + 0.7 * u(rng)) / total;
    for (std::size_t k = 0; k < knots; ++k) {
      xs.push_back(xs.back() + 0.1 + 0.5 * u(rng));
      const double step = inc[k] * scale;
      vb.push_back(vb.back() + step);
      va.push_back(va.back() + step * u(rng));
    }
    const RadialGrid grid = RadialGrid::with_spacing(xs.back() + compute_steady(d).R_inf + 3.0, 1e-2);
    const auto a = solve_split(make_v0(InitialMeasure::table(d, xs, va), grid), T, delta, d, SplitOptions{.snapshot_every = 50});
    const auto b = solve_split(make_v0(InitialMeasure::table(d, xs, vb), grid), T, delta, d, SplitOptions{.snapshot_every = 50});
    for (std::size_t k = 0; k < a.snapshots.size(); ++k)
      for (std::size_t i = 0; i < grid.size(); ++i) {
        worst_field = std::max(worst_field, a.snapshots[k].upper[i] - b.snapshots[k].upper[i]);
        worst_field = std::max(worst_field, a.snapshots[k].lower[i] - b.snapshots[k].lower[i]);
      }
    for (std::size_t k = 0; k < a.times.size(); ++k) {
      const auto diff = [](double ra, double rb) {
        if (std::isinf(rb)) return std::isinf(ra) ? -1.0 : 1.0;
        return rb - ra;
      };
      worst_radius = std::max({worst_radius, diff(a.R_upper[k], b.R_upper[k]), diff(a.R_lower[k], b.R_lower[k])});
    }
  }
  // Each enclosure is compared with its own counterpart, so the gap allowance is not needed.
  const bool ok = worst_field <= 1e-9 && worst_radius <= 1e-9;
  return {ok, "max (v_a - v_b) = " + fmt(worst_field) + " <= 1e-9; max (R_b - R_a) = " + fmt(worst_radius) + " <= 1e-9"};
}

// 10. N-BBM against the solver at t = 10 in d = 1.
Outcome criterion_10() {
  const auto r = run(compare_d1_config());
  const bool fast = r.seconds < 180.0;
  return {r.passed() && fast, describe(need(r, "mean_sup_cdf")) + "; " + describe(need(r, "mean_abs_radius")) + "; runtime " +
                                  fmt(r.seconds) + " s < 180 s"};
}

// 11. Time averages over [20, 40] in d = 2 against V and R_inf.
Outcome criterion_11() {
  std::vector<double> obs;
  for (int t = 20; t <= 40; ++t) obs.push_back(t);
  const auto r = run({{"experiment", "compare_bees"},
                      {"dim", 2},
                      {"initial", {{"kind", "uniform_ball"}, {"params", {{"radius", 1.0}}}}},
                      {"seed", 7},
                      {"solver", {{"T", 0.0}}},
                      {"simulator", {{"N", 2000}, {"replicas", 4}, {"observation_times", obs}, {"average_window", {20.0, 40.0}}}},
                      {"tolerances", {{"avg_cdf_sup", 0.05}, {"avg_radius_abs", 0.1}}}});
  return {r.passed(), describe(need(r, "avg_sup_cdf_vs_V")) + "; " + describe(need(r, "avg_abs_radius_vs_R_inf"))};
}

// 12. Killed Brownian motion mass with the solver boundary.
Outcome criterion_12() {
  const auto r = run({{"experiment", "density"},
                      {"dim", 1},
                      {"initial", {{"kind", "uniform_ball"}, {"params", {{"radius", 1.0}}}}},
                      {"seed", 12},
                      {"solver", {{"delta", 1e-4}, {"spacing", 1e-3}}},
                      {"density",
                       {{"t", 1.0}, {"n_paths", 100000}, {"dt", 1e-4}, {"layout", "radial"}, {"extent", 3.0}, {"cells", 60},
                        {"boundary", "solver"}}},
                      {"tolerances", {{"mass_abs", 0.02}}}});
  return {r.passed(), "mass " + fmt(r.metrics.value("total_mass", 0.0)) + " +- " + fmt(r.metrics.value("total_mass_stderr", 0.0)) +
                          " (" + describe(need(r, "unit_mass")) + "); " + describe(need(r, "mass_outside_boundary")) +
                          " with R_t = " + fmt(r.metrics.value("R_t", 0.0))};
}

// 13. Mass doubling for three (d, c, K) and the shifted bound for n <= 3.
Outcome criterion_13() {
  bool ok = true;
  std::string detail;
  const std::vector<std::tuple<int, double, double>> cases{{1, 0.01, 3.0}, {2, 0.01, 3.0}, {3, 0.005, 4.0}};
  for (const auto& [d, c, K] : cases) {
    const auto r = run({{"experiment", "mass_doubling"},
                        {"dim", d},
                        {"initial", {{"kind", "indicator_step"}, {"params", {{"c", c}, {"K", K}}}}},
                        {"solver", {{"delta", 1e-3}, {"spacing", 5e-3}}},
                        {"doubling", {{"c0", 0.25}, {"max_t1", 10.0}, {"shifts", 3}}}});
    ok = ok && r.passed();
    detail += (detail.empty() ? "" : "; ") + std::string("d=") + std::to_string(d) + " t1=" +
              fmt(r.metrics.value("t1", std::nan(""))) + " shift margin " +
              fmt(r.metrics.value("shift_worst_margin", std::nan(""))) + (r.passed() ? "" : " failing: " + failures(r));
  }
  return {ok, detail};
}

// 14. Criterion 10 repeated with the same seed (and a different worker count)
// reproduces every CSV byte-for-byte.
Outcome criterion_14() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / ("beefbp_acceptance_" + std::to_string(::getpid()));
  const auto produce = [&](const std::string& tag, const char* workers) {
    ::setenv("BEEFBP_WORKERS", workers, 1);
    const auto r = run(compare_d1_config());
    write_outputs(r, root / tag);
    return r;
  };
  produce("a", "1");
  produce("b", "3");
  ::unsetenv("BEEFBP_WORKERS");
  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    if (e.path().extension() != ".csv") continue;
    ++files;
    const auto other = root / "b" / e.path().filename();
    if (!fs::exists(other) || read_file(e.path()) != read_file(other)) ++differing;
  }
  std::size_t files_b = 0;
  for (const auto& e : fs::directory_iterator(root / "b"))
    if (e.path().extension() == ".csv") ++files_b;
  fs::remove_all(root);
  const bool ok = files > 0 && files == files_b && differing == 0;
  return {ok, std::to_string(files) + " CSV files compared, " + std::to_string(differing) + " differ (1 vs 3 workers)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria{criterion_1,  criterion_2,  criterion_3,  criterion_4,  criterion_5,
                                                       criterion_6,  criterion_7,  criterion_8,  criterion_9,  criterion_10,
                                                       criterion_11, criterion_12, criterion_13, criterion_14};
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::cerr << "usage: acceptance [--criterion N]\n";
      return 2;
    }
  }
  if (only < 0 || only > static_cast<int>(criteria.size())) {
    std::cerr << "criterion must lie in 1.." << criteria.size() << "\n";
    return 2;
  }
  bool all = true;
  for (int n = 1; n <= static_cast<int>(criteria.size()); ++n) {
    if (only && n != only) continue;
    Outcome o;
    try {
      o = criteria[static_cast<std::size_t>(n - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  }
  return all ? 0 : 1;
}
