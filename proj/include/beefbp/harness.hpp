#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "beefbp/bees.hpp"
#include "beefbp/config.hpp"
#include "beefbp/density.hpp"
#include "beefbp/greens.hpp"
#include "beefbp/io.hpp"
#include "beefbp/obstacle.hpp"
#include "beefbp/parallel.hpp"
#include "beefbp/steady.hpp"

namespace beefbp {

/// One declared tolerance and the measured value it was held against.
struct Check {
  std::string name;
  double value = 0.0;
  std::string relation;  // "<=" or ">="
  double limit = 0.0;
  bool pass = false;
};

struct RunReport {
  std::string experiment;
  Json config = Json::object();
  Json metrics = Json::object();
  std::vector<Check> checks;
  /// Output files by name (CSV text).
  std::map<std::string, std::string> files;
  std::string error;
  double seconds = 0.0;

  const Check& check(const std::string& name, double value, const std::string& relation, double limit) {
    Check c{name, value, relation, limit, false};
    if (!std::isnan(value)) c.pass = relation == "<=" ? value <= limit : value >= limit;
    checks.push_back(c);
    return checks.back();
  }

  bool passed() const {
    return error.empty() && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }

  std::vector<std::string> failing() const {
    std::vector<std::string> out;
    if (!error.empty()) out.push_back("error");
    for (const auto& c : checks)
      if (!c.pass) out.push_back(c.name);
    return out;
  }

  const Check* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }

  /// Report document. Timings and the code checksum are kept under separate keys
  /// so that everything else is reproducible byte-for-byte.
  Json to_json(const std::string& code_checksum = "") const {
    Json checks_json = Json::array();
    for (const auto& c : checks)
      checks_json.push_back(
          {{"name", c.name}, {"value", json_number(c.value)}, {"relation", c.relation}, {"limit", json_number(c.limit)}, {"pass", c.pass}});
    return Json{{"experiment", experiment},
                {"config", config},
                {"metrics", metrics},
                {"checks", checks_json},
                {"passed", passed()},
                {"failing", failing()},
                {"error", error},
                {"timings", {{"seconds", seconds}}},
                {"checksums", {{"config", hex64(fnv1a(config.dump()))}, {"code", code_checksum}}}};
  }
};

/// FNV-1a of the running executable, or of the build stamp when it cannot be read.
inline std::string code_checksum() {
  try {
    return hex64(fnv1a(read_file("/proc/self/exe")));
  } catch (const Error&) {
    return hex64(fnv1a(__DATE__ " " __TIME__));
  }
}

/// Writes every file of the report plus report.json into dir.
inline void write_outputs(const RunReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, text] : r.files) write_file(dir / name, text);
  write_file(dir / "report.json", dump_json(r.to_json(code_checksum())));
}

/// Time label used in file names, rounded to 1e-9.
inline std::string time_label(double t) { return format_double(std::round(t * 1e9) / 1e9); }

namespace detail {

inline RadialGrid solver_grid(const ExperimentConfig& c) {
  const double x_max = c.solver.x_max > 0.0 ? c.solver.x_max : default_x_max(c.initial);
  return RadialGrid::with_spacing(x_max, c.solver.spacing);
}

inline SplitOptions split_options(const ExperimentConfig& c) {
  SplitOptions o;
  o.snapshot_every = c.solver.snapshot_every;
  o.snapshot_times = c.solver.snapshot_times;
  o.contact_tol_upper = c.solver.contact_tol_upper;
  o.contact_tol_lower = c.solver.lower_tol();
  o.max_gap = c.solver.max_gap;
  o.tail_tol = c.solver.tail_tol;
  o.quadrature.quad_tol = c.solver.quad_tol;
  return o;
}

inline KernelTable kernel_table(const ExperimentConfig& c, const RadialGrid& grid) {
  QuadratureOptions q;
  q.quad_tol = c.solver.quad_tol;
  return KernelTable(grid, KernelParams{c.dim, c.solver.delta, c.solver.tail_tol}, q);
}

inline std::vector<double> steady_samples(const SteadyState& s, const RadialGrid& grid) {
  std::vector<double> v(grid.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = eval_V(s, grid.node(i));
  return v;
}

inline std::size_t step_of(double t, double delta) { return static_cast<std::size_t>(std::llround(t / delta)); }

/// Tracks the largest excess of the achieved enclosure gap over its bound.
struct CertificateTracker {
  double worst_excess = -std::numeric_limits<double>::infinity();
  double worst_gap = 0.0;
  void update(const SplittingScheme& s) {
    const double g = s.gap_achieved();
    worst_gap = std::max(worst_gap, g);
    worst_excess = std::max(worst_excess, g - s.gap_bound());
  }
  void report(RunReport& r, double defect, double slack) const {
    r.metrics["certificate_worst_excess"] = json_number(worst_excess);
    r.metrics["certificate_worst_gap"] = worst_gap;
    r.metrics["quadrature_defect"] = defect;
    r.check("enclosure_certificate", worst_excess, "<=", slack * defect);
  }
};

inline void record_solver_diagnostics(RunReport& r, const KernelTable& table, const RadialGrid& grid) {
  r.metrics["grid"] = {{"x_max", grid.x_max()}, {"cells", grid.cells()}, {"spacing", grid.spacing()}};
  if (!table.warning().empty()) r.metrics["warning"] = table.warning();
}

inline CsvTable boundary_table() { return CsvTable({"t", "R_lower", "R_upper", "gap_bound", "gap_achieved"}); }

inline void add_boundary_row(CsvTable& tab, const SplittingScheme& s, double tol_upper, double tol_lower) {
  tab.add_row({s.time(), extract_boundary(s.lower(), tol_lower), extract_boundary(s.upper(), tol_upper), s.gap_bound(),
               s.gap_achieved()});
}

inline double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace detail

/// Runs fn and turns any library error into a failed report naming the error.
inline RunReport run_guarded(const ExperimentConfig& cfg, const std::function<void(RunReport&)>& fn) {
  RunReport r;
  r.experiment = to_string(cfg.experiment);
  r.config = config_to_json(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    fn(r);
  } catch (const PlanningError& e) {
    r.error = e.what();
    r.metrics["required_delta"] = e.required_delta();
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Splitting and/or penalized solve with boundary series and field snapshots.
inline RunReport run_solve(const ExperimentConfig& cfg) {
  return run_guarded(cfg, [&](RunReport& r) {
    const auto grid = detail::solver_grid(cfg);
    const auto v0 = make_v0(cfg.initial, grid);
    const bool split = cfg.solver.scheme != "penalized";
    const bool pen = cfg.solver.scheme != "split";
    std::vector<double> times = cfg.solver.snapshot_times;
    times.push_back(cfg.solver.T);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());

    std::map<std::size_t, SplitSnapshot> split_snaps;
    if (split) {
      auto opt = detail::split_options(cfg);
      opt.snapshot_times = times;
      detail::CertificateTracker cert;
      opt.observer = [&](const SplittingScheme& s) { cert.update(s); };
      const auto sol = solve_split(v0, cfg.solver.T, cfg.solver.delta, cfg.dim, opt);
      CsvTable tab = detail::boundary_table();
      for (std::size_t k = 0; k < sol.times.size(); ++k)
        tab.add_row({sol.times[k], sol.R_lower[k], sol.R_upper[k], sol.gap_bound[k], sol.gap_achieved[k]});
      r.files["boundary.csv"] = tab.str();
      for (const auto& sn : sol.snapshots) split_snaps.emplace(sn.step, sn);
      r.metrics["gap_achieved_final"] = sol.gap_achieved.back();
      r.metrics["gap_bound_final"] = sol.gap_bound.back();
      r.metrics["R_upper_final"] = json_number(sol.R_upper.back());
      r.metrics["R_lower_final"] = json_number(sol.R_lower.back());
      r.metrics["contact_tol_lower"] = cfg.solver.lower_tol();
      if (!sol.warning.empty()) r.metrics["warning"] = sol.warning;
      cert.report(r, sol.quadrature_defect, cfg.tolerances.at("certificate_slack"));
    }
    PenalizedSolution psol;
    if (pen) {
      PenalizedOptions popt;
      popt.snapshot_times = times;
      psol = solve_penalized(v0, cfg.dim, cfg.solver.T, cfg.solver.penalty_n, cfg.solver.penalized_dt, popt);
      r.metrics["penalized_clamp_count"] = psol.clamp_count;
    }
    Json cross = Json::object();
    double worst_cross = 0.0;
    for (double t : times) {
      std::vector<std::string> head{"x"};
      const SplitSnapshot* sn = nullptr;
      const GridFunction* pv = nullptr;
      if (split) {
        auto it = split_snaps.find(detail::step_of(t, cfg.solver.delta));
        if (it != split_snaps.end()) sn = &it->second;
      }
      if (pen) pv = &psol.at(t);
      if (sn) head.insert(head.end(), {"v_lower", "v_upper"});
      if (pv) head.push_back("v_penalized");
      CsvTable tab(head);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        std::vector<double> row{grid.node(i)};
        if (sn) row.insert(row.end(), {sn->lower[i], sn->upper[i]});
        if (pv) row.push_back((*pv)[i]);
        tab.add_row(row);
      }
      r.files["snapshot_" + time_label(t) + ".csv"] = tab.str();
      if (sn && pv) {
        const double d = sup_distance(midpoint(sn->lower, sn->upper), *pv);
        cross[time_label(t)] = d;
        worst_cross = std::max(worst_cross, d);
      }
    }
    if (split && pen) {
      r.metrics["split_vs_penalized"] = cross;
      r.check("split_vs_penalized", worst_cross, "<=", cfg.tolerances.at("cross_sup"));
    }
  });
}

/// Stationarity: started from V, the upper enclosure stays within a tolerance of V.
inline RunReport run_stationarity(const ExperimentConfig& cfg) {
  return run_guarded(cfg, [&](RunReport& r) {
    if (cfg.initial.kind != MeasureKind::steady_V) throw DomainError("stationarity: initial kind must be steady_V");
    const auto grid = detail::solver_grid(cfg);
    const auto Vs = detail::steady_samples(compute_steady(cfg.dim), grid);
    SplittingScheme s(make_v0(cfg.initial, grid), detail::kernel_table(cfg, grid));
    detail::record_solver_diagnostics(r, s.table(), grid);
    detail::CertificateTracker cert;
    CsvTable tab = detail::boundary_table();
    CsvTable err({"t", "sup_upper_minus_V", "sup_lower_minus_V"});
    const std::size_t n = steps_for(cfg.solver.T, cfg.solver.delta);
    const std::size_t every = std::max<std::size_t>(1, cfg.solver.snapshot_every);
    double worst = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
      if (k > 0) s.step();
      cert.update(s);
      const double eu = sup_distance(s.upper().values, Vs);
      worst = std::max(worst, eu);
      if (k % every == 0 || k == n) {
        detail::add_boundary_row(tab, s, cfg.solver.contact_tol_upper, cfg.solver.lower_tol());
        err.add_row({s.time(), eu, sup_distance(s.lower().values, Vs)});
      }
    }
    r.files["boundary.csv"] = tab.str();
    r.files["stationarity.csv"] = err.str();
    r.metrics["sup_upper_minus_V"] = worst;
    r.check("sup_upper_minus_V", worst, "<=", cfg.tolerances.at("sup_error"));
    cert.report(r, s.table().quadrature_defect(), cfg.tolerances.at("certificate_slack"));
  });
}

/// Exponential relaxation from v0 = 1: fits the decay rate of the upper enclosure
/// and compares it with the spectral gap lambda.
///
/// The error of upper(t) against V levels off at the scheme's own stationary bias,
/// so the rate is fitted on sup|upper(t) - ref(t)| where ref is the same scheme
/// started from V; both runs share the discretization and converge to the same
/// discrete steady state. The V-based series is reported alongside.
inline RunReport run_rate_upper(const ExperimentConfig& cfg) {
  return run_guarded(cfg, [&](RunReport& r) {
    if (cfg.initial.kind != MeasureKind::constant_one) throw DomainError("rate_upper: initial kind must be constant_one");
    const auto grid = detail::solver_grid(cfg);
    const auto st = compute_steady(cfg.dim);
    const auto Vs = detail::steady_samples(st, grid);
    const double delta = cfg.solver.delta;
    const double t0 = cfg.window[0], t1 = cfg.window[1];
    if (cfg.solver.T < t1) throw DomainError("rate_upper: solver.T must cover the window");
    auto table = detail::kernel_table(cfg, grid);
    detail::record_solver_diagnostics(r, table, grid);
    SplittingScheme s(make_v0(cfg.initial, grid), table);
    SplittingScheme ref(make_v0(InitialMeasure::steady_V(cfg.dim), grid), std::move(table));
    detail::CertificateTracker cert;
    const std::size_t n = steps_for(cfg.solver.T, delta);
    const std::size_t every =
        cfg.solver.snapshot_every > 0 ? cfg.solver.snapshot_every : std::max<std::size_t>(1, detail::step_of(0.05, delta));
    CsvTable series({"t", "err_V", "err_ref", "gap_bound", "R_upper"});
    std::vector<double> ts, log_v, log_ref;
    const double ref_floor = cfg.tolerances.at("floor_factor") * cfg.solver.tail_tol;
    double err_start = std::numeric_limits<double>::quiet_NaN(), gap_start = err_start;
    for (std::size_t k = 0; k <= n; ++k) {
      if (k > 0) {
        s.step();
        ref.step();
      }
      cert.update(s);
      if (k % every != 0 && k != n) continue;
      const double t = s.time();
      const double ev = sup_distance(s.upper().values, Vs);
      const double er = sup_distance(s.upper(), ref.upper());
      series.add_row({t, ev, er, s.gap_bound(), extract_boundary(s.upper(), cfg.solver.contact_tol_upper)});
      const bool in_window = t >= t0 - 0.5 * delta && t <= t1 + 0.5 * delta;
      if (!in_window) continue;
      if (std::isnan(err_start)) {
        err_start = ev;
        gap_start = s.gap_bound();
      }
      if (er > ref_floor && ev > 0.0) {
        ts.push_back(t);
        log_v.push_back(std::log(ev));
        log_ref.push_back(std::log(er));
      }
    }
    r.files["rate_series.csv"] = series.str();
    const double slope_ref = detail::least_squares_slope(ts, log_ref);
    const double slope_v = detail::least_squares_slope(ts, log_v);
    r.metrics["lambda"] = st.lambda;
    r.metrics["slope_ref"] = json_number(slope_ref);
    r.metrics["slope_V"] = json_number(slope_v);
    r.metrics["fit_points"] = ts.size();
    r.metrics["gap_floor_at_window_start"] = gap_start;
    r.metrics["err_V_at_window_start"] = err_start;
    const double margin = err_start / gap_start;
    r.check("window_above_gap_floor", margin, ">=", cfg.tolerances.at("floor_factor"));
    if (margin >= cfg.tolerances.at("floor_factor")) {
      r.check("rate_relative_error", std::abs(slope_ref / -st.lambda - 1.0), "<=", cfg.tolerances.at("rate_rel"));
    } else {
      r.metrics["rate_asserted"] = false;
    }
    cert.report(r, s.table().quadrature_defect(), cfg.tolerances.at("certificate_slack"));
  });
}

/// Convergence from below for indicator data: t (V - lower) and t (R_lower - R_inf)
/// stay bounded by their value at the window start times the envelope factor.
inline RunReport run_rate_lower(const ExperimentConfig& cfg) {
  return run_guarded(cfg, [&](RunReport& r) {
    if (cfg.initial.kind != MeasureKind::indicator_step) throw DomainError("rate_lower: initial kind must be indicator_step");
    const auto grid = detail::solver_grid(cfg);
    const auto st = compute_steady(cfg.dim);
    const auto Vs = detail::steady_samples(st, grid);
    const double delta = cfg.solver.delta;
    const double t0 = cfg.window[0], t1 = cfg.window[1];
    SplittingScheme s(make_v0(cfg.initial, grid), detail::kernel_table(cfg, grid));
    detail::record_solver_diagnostics(r, s.table(), grid);
    detail::CertificateTracker cert;
    const std::size_t n = steps_for(t1, delta);
    const std::size_t every =
        cfg.solver.snapshot_every > 0 ? cfg.solver.snapshot_every : std::max<std::size_t>(1, detail::step_of(0.1, delta));
    const double tol_lower = cfg.solver.lower_tol();
    CsvTable series({"t", "t_sup_V_minus_lower", "R_lower", "t_R_lower_minus_R_inf", "R_upper"});
    double a0 = std::numeric_limits<double>::quiet_NaN(), b0 = a0, a_max = -1e300, b_max = -1e300, above = -1e300;
    for (std::size_t k = 0; k <= n; ++k) {
      if (k > 0) s.step();
      cert.update(s);
      for (std::size_t i = 0; i < Vs.size(); ++i) above = std::max(above, s.lower()[i] - Vs[i]);
      const double t = s.time();
      if (t < t0 - 0.5 * delta || (k % every != 0 && k != n)) continue;
      double sup = 0.0;
      for (std::size_t i = 0; i < Vs.size(); ++i) sup = std::max(sup, Vs[i] - s.lower()[i]);
      const double R = extract_boundary(s.lower(), tol_lower);
      const double a = t * sup, b = t * (R - st.R_inf);
      series.add_row({t, a, R, b, extract_boundary(s.upper(), cfg.solver.contact_tol_upper)});
      if (std::isnan(a0)) {
        a0 = a;
        b0 = b;
      }
      a_max = std::max(a_max, a);
      b_max = std::max(b_max, b);
    }
    r.files["envelope_series.csv"] = series.str();
    const double f = cfg.tolerances.at("envelope_factor");
    r.metrics["contact_tol_lower"] = tol_lower;
    r.metrics["v_envelope_start"] = a0;
    r.metrics["v_envelope_max"] = a_max;
    r.metrics["R_envelope_start"] = json_number(b0);
    r.metrics["R_envelope_max"] = json_number(b_max);
    r.metrics["max_lower_minus_V"] = above;
    r.check("v_envelope_bounded", a_max, "<=", f * a0);
    r.check("R_envelope_bounded", b_max, "<=", f * b0);
    // lower <= v <= V holds exactly for the continuous operators; the discrete
    // iterates carry the quadrature defect of the kernel table.
    r.check("lower_below_V", above, "<=",
            cfg.tolerances.at("above_V") + cfg.tolerances.at("certificate_slack") * s.table().quadrature_defect());
    cert.report(r, s.table().quadrature_defect(), cfg.tolerances.at("certificate_slack"));
  });
}

/// Boundary convergence from v0 = 1 and the contact second difference.
inline RunReport run_boundary_conv(const ExperimentConfig& cfg) {
  return run_guarded(cfg, [&](RunReport& r) {
    const auto grid = detail::solver_grid(cfg);
    const auto st = compute_steady(cfg.dim);
    const double delta = cfg.solver.delta, h = grid.spacing();
    SplittingScheme s(make_v0(cfg.initial, grid), detail::kernel_table(cfg, grid));
    detail::record_solver_diagnostics(r, s.table(), grid);
    detail::CertificateTracker cert;
    CsvTable tab = detail::boundary_table();
    const std::size_t n = steps_for(cfg.solver.T, delta);
    const std::size_t contact_step = detail::step_of(cfg.t_contact, delta);
    if (contact_step > n) throw DomainError("boundary_conv: t_contact lies beyond solver.T");
    const std::size_t every =
        cfg.solver.snapshot_every > 0 ? cfg.solver.snapshot_every : std::max<std::size_t>(1, detail::step_of(0.01, delta));
    double worst = 0.0, second_diff = std::numeric_limits<double>::quiet_NaN(), x_c = second_diff;
    for (std::size_t k = 0; k <= n; ++k) {
      if (k > 0) s.step();
      cert.update(s);
      const double R = extract_boundary(s.upper(), cfg.solver.contact_tol_upper);
      if (s.time() >= cfg.t_from - 0.5 * delta) worst = std::max(worst, std::abs(R - st.R_inf));
      if (k % every == 0 || k == n) detail::add_boundary_row(tab, s, cfg.solver.contact_tol_upper, cfg.solver.lower_tol());
      if (k == contact_step && std::isfinite(R)) {
        // Centered second difference just inside the contact point, kept one
        // kernel width away from the kink of the clipped iterate.
        x_c = R - std::max(2.0 * h, 2.0 * std::sqrt(delta));
        const auto i = static_cast<std::size_t>(std::llround(x_c / h));
        if (i >= 1 && i + 1 < grid.size()) {
          const auto& v = s.upper();
          second_diff = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
          x_c = grid.node(i);
        }
      }
    }
    r.files["boundary.csv"] = tab.str();
    r.metrics["R_inf"] = st.R_inf;
    r.metrics["max_abs_R_minus_R_inf"] = worst;
    r.metrics["contact_x"] = json_number(x_c);
    r.metrics["contact_second_difference"] = json_number(second_diff);
    r.check("radius_after_t_from", worst, "<=", cfg.tolerances.at("radius_abs"));
    r.check("contact_second_difference_lo", second_diff, ">=", cfg.tolerances.at("contact_lo"));
    r.check("contact_second_difference_hi", second_diff, "<=", cfg.tolerances.at("contact_hi"));
    cert.report(r, s.table().quadrature_defect(), cfg.tolerances.at("certificate_slack"));
  });
}

/// Killed Brownian motion density against a constant, solved or file boundary.
inline RunReport run_density(const ExperimentConfig& cfg) {
  return run_guarded(cfg, [&](RunReport& r) {
    const auto& dc = cfg.density;
    BoundaryPath path;
    if (dc.boundary == "constant") {
      path = BoundaryPath::constant(dc.boundary_radius, dc.t);
    } else if (dc.boundary == "file") {
      path = read_boundary_csv(dc.boundary_file, dc.boundary_column);
    } else {
      auto c = cfg;
      c.solver.T = dc.t;
      const auto grid = detail::solver_grid(c);
      auto opt = detail::split_options(c);
      const auto sol = solve_split(make_v0(c.initial, grid), dc.t, c.solver.delta, c.dim, opt);
      path = BoundaryPath::from_solution(sol, dc.boundary_column != "R_lower");
      CsvTable tab = detail::boundary_table();
      for (std::size_t k = 0; k < sol.times.size(); ++k)
        tab.add_row({sol.times[k], sol.R_lower[k], sol.R_upper[k], sol.gap_bound[k], sol.gap_achieved[k]});
      r.files["boundary.csv"] = tab.str();
    }
    KilledBMOptions opt;
    opt.n_paths = dc.n_paths;
    opt.dt = dc.dt;
    opt.seed = cfg.seed;
    opt.grid = DensityGridSpec{density_layout_from_string(dc.layout), dc.extent, dc.cells};
    opt.bridge_correction = dc.bridge_correction;
    const auto res = killed_bm_density(cfg.initial, path, dc.t, opt);
    const auto& est = res.estimate;
    std::vector<std::string> head;
    if (est.layout == DensityLayout::radial) {
      head = {"r"};
    } else {
      for (int k = 0; k < est.dim; ++k) head.push_back("x" + std::to_string(k + 1));
    }
    head.insert(head.end(), {"value", "stderr"});
    CsvTable tab(head);
    const double R_t = path.at(dc.t);
    double outside = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
      std::vector<double> row;
      if (est.layout == DensityLayout::radial) {
        row.push_back(0.5 * (est.shell(i).first + est.shell(i).second));
      } else {
        row = est.center(i);
      }
      row.insert(row.end(), {est.values[i], est.std_error[i]});
      tab.add_row(row);
      if (est.norm_range(i).first >= R_t) outside += est.values[i] * est.cell_volume(i);
    }
    r.files["density.csv"] = tab.str();
    const double mass = est.total_mass();
    const double weight = std::exp(dc.t);
    const double se = est.total_mass_stderr(weight);
    r.metrics["total_mass"] = mass;
    r.metrics["total_mass_stderr"] = se;
    r.metrics["survivors"] = res.survivors;
    r.metrics["outside_grid"] = res.outside_grid;
    r.metrics["R_t"] = R_t;
    r.check("sub_probability", mass / weight, "<=", 1.0 + cfg.tolerances.at("stderr_multiple") * se / weight);
    r.check("mass_outside_boundary", outside, "<=", 0.0);
    r.check("paths_outside_grid", static_cast<double>(res.outside_grid), "<=", 0.0);
    if (dc.boundary != "constant") r.check("unit_mass", std::abs(mass - 1.0), "<=", cfg.tolerances.at("mass_abs"));
  });
}

namespace detail {

struct ReplicaTrace {
  std::vector<double> radius;                 // per observation time
  std::vector<std::vector<double>> ecdf;      // per observation time
  std::vector<double> avg_ecdf;               // summed over the averaging window
  double avg_radius = 0.0;
  std::size_t avg_count = 0;
  std::uint64_t events = 0;
};

inline ReplicaTrace run_replica(const ExperimentConfig& cfg, const RadialGrid& grid, std::size_t replica,
                                const std::vector<double>& obs) {
  BeesOptions bo;
  bo.branching_rate = cfg.simulator.branching_rate;
  bo.order = selection_order_from_string(cfg.simulator.order);
  auto e = init_ensemble(cfg.initial, cfg.simulator.N, cfg.dim, cfg.seed, replica, bo);
  ReplicaTrace tr;
  const auto& w = cfg.simulator.average_window;
  tr.avg_ecdf.assign(grid.size(), 0.0);
  for (double t : obs) {
    advance(e, t);
    const auto f = empirical_radial_cdf(e, grid);
    tr.radius.push_back(ensemble_radius(e));
    if (!w.empty() && t >= w[0] && t <= w[1]) {
      for (std::size_t i = 0; i < f.size(); ++i) tr.avg_ecdf[i] += f[i];
      tr.avg_radius += tr.radius.back();
      ++tr.avg_count;
    }
    tr.ecdf.push_back(f.values);
  }
  tr.events = e.n_branch_events;
  return tr;
}

inline std::vector<double> sorted_times(std::vector<double> t) {
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  detail::require(!t.empty() && t.front() >= 0.0, "observation_times must be non-empty and non-negative");
  return t;
}

// Replicas run concurrently, each on its own stream; results are kept in replica order.
inline std::vector<ReplicaTrace> run_replicas(const ExperimentConfig& cfg, const RadialGrid& grid,
                                              const std::vector<double>& obs) {
  std::vector<ReplicaTrace> out(cfg.simulator.replicas);
  parallel_for(out.size(), [&](std::size_t k) { out[k] = run_replica(cfg, grid, k, obs); });
  return out;
}

inline void add_simulation_files(RunReport& r, const RadialGrid& grid, const std::vector<double>& obs,
                                 const std::vector<ReplicaTrace>& reps, const std::map<std::size_t, GridFunction>& solver) {
  CsvTable radius({"t", "replica", "R"});
  for (std::size_t j = 0; j < obs.size(); ++j)
    for (std::size_t k = 0; k < reps.size(); ++k) radius.add_row({obs[j], static_cast<double>(k), reps[k].radius[j]});
  r.files["radius.csv"] = radius.str();
  for (std::size_t j = 0; j < obs.size(); ++j) {
    const auto it = solver.find(j);
    CsvTable tab(it == solver.end() ? std::vector<std::string>{"x", "ecdf_mean"}
                                    : std::vector<std::string>{"x", "ecdf_mean", "v_solver_mid"});
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double m = 0.0;
      for (const auto& rep : reps) m += rep.ecdf[j][i];
      std::vector<double> row{grid.node(i), m / static_cast<double>(reps.size())};
      if (it != solver.end()) row.push_back(it->second[i]);
      tab.add_row(row);
    }
    r.files["ecdf_" + time_label(obs[j]) + ".csv"] = tab.str();
  }
}

}  // namespace detail

/// N-BBM replicas: radius series and empirical radial CDFs at the observation times.
inline RunReport run_simulate(const ExperimentConfig& cfg) {
  return run_guarded(cfg, [&](RunReport& r) {
    const auto obs = detail::sorted_times(cfg.simulator.observation_times);
    const auto grid = detail::solver_grid(cfg);
    const auto reps = detail::run_replicas(cfg, grid, obs);
    detail::add_simulation_files(r, grid, obs, reps, {});
    Json mean_r = Json::object();
    for (std::size_t j = 0; j < obs.size(); ++j) {
      double m = 0.0;
      for (const auto& rep : reps) m += rep.radius[j];
      mean_r[time_label(obs[j])] = m / static_cast<double>(reps.size());
    }
    Json events = Json::array();
    for (const auto& rep : reps) events.push_back(rep.events);
    r.metrics["mean_radius"] = mean_r;
    r.metrics["branch_events"] = events;
  });
}

/// Particle system against the obstacle solver (enclosure midpoint and R_upper)
/// at observation times up to solver.T, and time averages against V and R_inf.
inline RunReport run_compare_bees(const ExperimentConfig& cfg) {
  return run_guarded(cfg, [&](RunReport& r) {
    if (!cfg.initial.samplable()) throw DomainError("compare_bees: initial measure must be a probability measure");
    const auto obs = detail::sorted_times(cfg.simulator.observation_times);
    const auto grid = detail::solver_grid(cfg);
    const auto st = compute_steady(cfg.dim);
    std::vector<std::size_t> compared;
    for (std::size_t j = 0; j < obs.size(); ++j)
      if (obs[j] > 0.0 && obs[j] <= cfg.solver.T + 1e-12) compared.push_back(j);

    std::map<std::size_t, GridFunction> mids;
    std::map<std::size_t, double> radii;
    if (!compared.empty()) {
      auto opt = detail::split_options(cfg);
      opt.snapshot_times.clear();
      for (auto j : compared) opt.snapshot_times.push_back(obs[j]);
      const double T = obs[compared.back()];
      const auto sol = solve_split(make_v0(cfg.initial, grid), T, cfg.solver.delta, cfg.dim, opt);
      r.metrics["quadrature_defect"] = sol.quadrature_defect;
      for (auto j : compared) {
        const std::size_t step = detail::step_of(obs[j], cfg.solver.delta);
        for (const auto& sn : sol.snapshots)
          if (sn.step == step) mids.emplace(j, midpoint(sn.lower, sn.upper));
        radii[j] = sol.R_upper[step];
      }
    }

    const auto reps = detail::run_replicas(cfg, grid, obs);
    detail::add_simulation_files(r, grid, obs, reps, mids);

    const auto n_rep = static_cast<double>(reps.size());
    Json per_time = Json::object();
    double worst_cdf = 0.0, worst_r = 0.0;
    for (auto j : compared) {
      double cdf = 0.0, dr = 0.0;
      for (const auto& rep : reps) {
        cdf += sup_distance(rep.ecdf[j], mids.at(j).values);
        dr += std::abs(rep.radius[j] - radii.at(j));
      }
      cdf /= n_rep;
      dr /= n_rep;
      per_time[time_label(obs[j])] = {{"mean_sup_cdf", cdf}, {"mean_abs_radius", dr}, {"R_solver", radii.at(j)}};
      worst_cdf = std::max(worst_cdf, cdf);
      worst_r = std::max(worst_r, dr);
    }
    r.metrics["per_time"] = per_time;
    if (!compared.empty()) {
      r.check("mean_sup_cdf", worst_cdf, "<=", cfg.tolerances.at("cdf_sup"));
      r.check("mean_abs_radius", worst_r, "<=", cfg.tolerances.at("radius_abs"));
    }

    if (!cfg.simulator.average_window.empty()) {
      std::vector<double> avg(grid.size(), 0.0);
      double rad = 0.0;
      std::size_t count = 0;
      for (const auto& rep : reps) {
        for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += rep.avg_ecdf[i];
        rad += rep.avg_radius;
        count += rep.avg_count;
      }
      if (count == 0) throw DomainError("compare_bees: no observation time inside the averaging window");
      for (double& a : avg) a /= static_cast<double>(count);
      rad /= static_cast<double>(count);
      const double dv = sup_distance(avg, detail::steady_samples(st, grid));
      CsvTable tab({"x", "ecdf_time_average", "V"});
      for (std::size_t i = 0; i < grid.size(); ++i) tab.add_row({grid.node(i), avg[i], eval_V(st, grid.node(i))});
      r.files["ecdf_average.csv"] = tab.str();
      r.metrics["average_window"] = {{"samples", count},
                                     {"sup_cdf_vs_V", dv},
                                     {"mean_radius", rad},
                                     {"R_inf", st.R_inf}};
      r.check("avg_sup_cdf_vs_V", dv, "<=", cfg.tolerances.at("avg_cdf_sup"));
      r.check("avg_abs_radius_vs_R_inf", std::abs(rad - st.R_inf), "<=", cfg.tolerances.at("avg_radius_abs"));
    }
  });
}

/// Mass doubling for small indicator data, certified on the lower enclosure: the
/// first t1 <= max_t1 with lower(x, t1) >= 2c for x > K - 1, then the shifted bound
/// lower(x, n t1) >= min(2 c0, 2^n c) for x > max(K - n, 1), n = 1..shifts.
inline RunReport run_mass_doubling(const ExperimentConfig& cfg) {
  if (cfg.initial.kind != MeasureKind::indicator_step) throw DomainError("mass_doubling: initial kind must be indicator_step");
  if (cfg.initial.c > cfg.tolerances.at("max_c"))
    throw DomainError("mass_doubling: c = " + format_double(cfg.initial.c) + " exceeds the small-mass limit " +
                      format_double(cfg.tolerances.at("max_c")));
  return run_guarded(cfg, [&](RunReport& r) {
    const auto grid = detail::solver_grid(cfg);
    const double c = cfg.initial.c, K = cfg.initial.K, delta = cfg.solver.delta;
    SplittingScheme s(make_v0(cfg.initial, grid), detail::kernel_table(cfg, grid));
    detail::record_solver_diagnostics(r, s.table(), grid);
    // Smallest margin lower(x) - level over nodes x > x_from.
    auto margin = [&](double level, double x_from) {
      double m = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < grid.size(); ++i)
        if (grid.node(i) > x_from) m = std::min(m, s.lower()[i] - level);
      return m;
    };
    const std::size_t max_steps = detail::step_of(cfg.doubling.max_t1, delta);
    std::size_t k1 = 0;
    double best = -std::numeric_limits<double>::infinity();
    while (s.steps() < max_steps) {
      s.step();
      const double m = margin(2.0 * c, K - 1.0);
      best = std::max(best, m);
      if (m >= 0.0) {
        k1 = s.steps();
        break;
      }
    }
    CsvTable tab({"n", "t", "level", "x_from", "margin"});
    if (k1 == 0) {
      r.metrics["best_margin"] = best;
      r.check("doubling_time_found", 0.0, ">=", 1.0);
      r.files["doubling.csv"] = tab.str();
      return;
    }
    const double t1 = static_cast<double>(k1) * delta;
    r.metrics["t1"] = t1;
    r.check("doubling_time_found", 1.0, ">=", 1.0);
    double worst = std::numeric_limits<double>::infinity();
    for (int n = 1; n <= cfg.doubling.shifts; ++n) {
      while (s.steps() < static_cast<std::size_t>(n) * k1) s.step();
      const double level = std::min(2.0 * cfg.doubling.c0, std::ldexp(c, n));
      const double x_from = std::max(K - n, 1.0);
      const double m = margin(level, x_from);
      tab.add_row({static_cast<double>(n), s.time(), level, x_from, m});
      worst = std::min(worst, m);
    }
    r.files["doubling.csv"] = tab.str();
    if (cfg.doubling.shifts > 0) {
      r.metrics["shift_worst_margin"] = worst;
      r.check("shifted_bound_margin", worst, ">=", 0.0);
    }
  });
}

/// Kernel identities on a sweep: the y-integral of G against w(0,x,t), and the
/// generic d=1 evaluators against the images forms.
inline RunReport run_kernel_suite(const ExperimentConfig& cfg) {
  return run_guarded(cfg, [&](RunReport& r) {
    const std::vector<double> xs{0.1, 0.5, 1.0, 2.0, 4.0};
    const std::vector<double> ts{0.01, 0.1, 0.5, 1.0, 4.0};
    CsvTable tab({"dim", "x", "t", "y_integral", "w0", "abs_error"});
    double worst_int = 0.0;
    for (int d = 1; d <= 3; ++d)
      for (double t : ts)
        for (double x : xs) {
          const KernelParams p{d, t, cfg.solver.tail_tol};
          const double integral = green_y_integral(x, p);
          const double w0 = radial_cdf_w(0.0, x, p);
          worst_int = std::max(worst_int, std::abs(integral - w0));
          tab.add_row({static_cast<double>(d), x, t, integral, w0, std::abs(integral - w0)});
        }
    double worst_img = 0.0;
    const std::vector<double> ys{0.05, 0.3, 1.0, 2.5, 5.0};
    for (double t : ts)
      for (double y : ys)
        for (double x : xs) {
          const KernelParams p{1, t, cfg.solver.tail_tol};
          worst_img = std::max(worst_img, std::abs(green_kernel_series(y, x, p) - green_kernel_images_1d(y, x, t)));
          worst_img = std::max(worst_img, std::abs(radial_cdf_w(y, x, p) - radial_cdf_images_1d(y, x, t)));
        }
    r.files["kernel_suite.csv"] = tab.str();
    r.metrics["max_y_integral_error"] = worst_int;
    r.metrics["max_images_error"] = worst_img;
    r.check("y_integral_identity", worst_int, "<=", cfg.tolerances.at("y_integral"));
    r.check("d1_images_agreement", worst_img, "<=", cfg.tolerances.at("images"));
  });
}

inline RunReport run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case ExperimentKind::solve: return run_solve(cfg);
    case ExperimentKind::density: return run_density(cfg);
    case ExperimentKind::simulate: return run_simulate(cfg);
    case ExperimentKind::stationarity: return run_stationarity(cfg);
    case ExperimentKind::rate_upper: return run_rate_upper(cfg);
    case ExperimentKind::rate_lower: return run_rate_lower(cfg);
    case ExperimentKind::boundary_conv: return run_boundary_conv(cfg);
    case ExperimentKind::compare_bees: return run_compare_bees(cfg);
    case ExperimentKind::mass_doubling: return run_mass_doubling(cfg);
    case ExperimentKind::kernel_suite: return run_kernel_suite(cfg);
  }
  throw DomainError("unknown experiment");
}

}  // namespace beefbp
