#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "beefbp/error.hpp"
#include "beefbp/greens.hpp"
#include "beefbp/grid.hpp"
#include "beefbp/measure.hpp"

namespace beefbp {

inline constexpr double kNoContact = std::numeric_limits<double>::infinity();

/// inf{x : v(x) >= 1 - contact_tol}, refined by linear interpolation between the
/// bracketing nodes; +inf when no node reaches the level.
inline double extract_boundary(const GridFunction& v, double contact_tol = 1e-8) {
  detail::require(contact_tol > 0.0, "extract_boundary: contact_tol must be positive");
  const double level = 1.0 - contact_tol;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] < level) continue;
    if (i == 0) return 0.0;
    const double a = v[i - 1], b = v[i];
    const double h = v.grid.spacing();
    return v.grid.node(i - 1) + h * (level - a) / (b - a);
  }
  return kNoContact;
}

/// (e^{n delta} + 1)(e^delta - 1): certified sup-distance between the enclosures after n steps.
inline double split_gap_bound(std::size_t n, double delta) {
  return (std::exp(static_cast<double>(n) * delta) + 1.0) * std::expm1(delta);
}

/// min(1, e^delta G_delta v) with a prebuilt table for G_delta.
inline GridFunction split_step_upper(const GridFunction& v, const KernelTable& table) {
  const double e = std::exp(table.params().time);
  GridFunction out = table.apply(v);
  for (double& x : out.values) x = std::min(1.0, e * x);
  out.beyond_right = std::min(1.0, e * out.beyond_right);
  return out;
}

/// e^delta G_delta min(v, e^{-delta}) with a prebuilt table for G_delta.
inline GridFunction split_step_lower(const GridFunction& v, const KernelTable& table) {
  const double delta = table.params().time;
  const double cap = std::exp(-delta), e = std::exp(delta);
  GridFunction clipped = v;
  for (double& x : clipped.values) x = std::min(x, cap);
  clipped.beyond_right = std::min(clipped.beyond_right, cap);
  GridFunction out = table.apply(clipped);
  for (double& x : out.values) x = std::min(1.0, e * x);
  out.beyond_right = std::min(1.0, e * out.beyond_right);
  return out;
}

inline GridFunction split_step_upper(const GridFunction& v, double delta, KernelParams p, QuadratureOptions q = {}) {
  p.time = delta;
  return split_step_upper(v, KernelTable(v.grid, p, q));
}

inline GridFunction split_step_lower(const GridFunction& v, double delta, KernelParams p, QuadratureOptions q = {}) {
  p.time = delta;
  return split_step_lower(v, KernelTable(v.grid, p, q));
}

/// Lower and upper splitting iterates advanced together on one kernel table.
class SplittingScheme {
 public:
  SplittingScheme(const GridFunction& v0, double delta, int dim, double tail_tol = 1e-12, QuadratureOptions q = {})
      : table_(v0.grid, KernelParams{dim, delta, tail_tol}, q), lower_(v0), upper_(v0) {
    detail::require(delta > 0.0, "SplittingScheme: delta must be positive");
  }
  /// Scheme reusing a prebuilt kernel table; its time is the step delta.
  SplittingScheme(const GridFunction& v0, KernelTable table) : table_(std::move(table)), lower_(v0), upper_(v0) {
    detail::require(v0.grid == table_.grid(), "SplittingScheme: table grid does not match v0");
  }

  void step() {
    lower_ = split_step_lower(lower_, table_);
    upper_ = split_step_upper(upper_, table_);
    ++steps_;
  }

  std::size_t steps() const noexcept { return steps_; }
  double delta() const noexcept { return table_.params().time; }
  double time() const noexcept { return static_cast<double>(steps_) * delta(); }
  const GridFunction& lower() const noexcept { return lower_; }
  const GridFunction& upper() const noexcept { return upper_; }
  const KernelTable& table() const noexcept { return table_; }
  double gap_bound() const { return split_gap_bound(steps_, delta()); }
  double gap_achieved() const { return sup_distance(upper_, lower_); }

 private:
  KernelTable table_;
  GridFunction lower_, upper_;
  std::size_t steps_ = 0;
};

struct SplitOptions {
  /// Store full fields every this many steps (0: only at snapshot_times and T).
  std::size_t snapshot_every = 0;
  /// Additional snapshot times, rounded to the nearest step.
  std::vector<double> snapshot_times;
  double contact_tol_upper = 1e-8;
  double contact_tol_lower = 1e-8;
  /// Largest acceptable gap_bound(T); exceeding it is a planning error.
  double max_gap = std::numeric_limits<double>::infinity();
  double tail_tol = 1e-12;
  QuadratureOptions quadrature{};
  /// Called after every step with the scheme state.
  std::function<void(const SplittingScheme&)> observer;
};

struct SplitSnapshot {
  double time = 0.0;
  std::size_t step = 0;
  GridFunction lower, upper;
};

/// Enclosure trajectory: per-step boundary and gap series plus stored fields.
struct ObstacleSolution {
  int dim = 1;
  double delta = 0.0;
  std::vector<double> times;
  std::vector<double> R_lower, R_upper;
  std::vector<double> gap_bound, gap_achieved;
  std::vector<SplitSnapshot> snapshots;
  double quadrature_defect = 0.0;
  std::string warning;

  /// Snapshot stored closest to time t.
  const SplitSnapshot& snapshot_at(double t) const {
    detail::require(!snapshots.empty(), "ObstacleSolution: no snapshots stored");
    return *std::min_element(snapshots.begin(), snapshots.end(), [t](const auto& a, const auto& b) {
      return std::abs(a.time - t) < std::abs(b.time - t);
    });
  }
};

/// Number of steps of size delta in T; T must be a multiple of delta.
inline std::size_t steps_for(double T, double delta) {
  detail::require(T >= 0.0 && delta > 0.0, "steps_for: T must be non-negative and delta positive");
  const double n = std::round(T / delta);
  detail::require(std::abs(n * delta - T) <= 1e-9 * std::max(1.0, T), "delta must divide T");
  return static_cast<std::size_t>(n);
}

inline ObstacleSolution solve_split(const GridFunction& v0, double T, double delta, int dim, const SplitOptions& opt = {}) {
  const std::size_t n_steps = steps_for(T, delta);
  const double bound_T = split_gap_bound(n_steps, delta);
  if (bound_T > opt.max_gap) {
    const double needed = std::log1p(opt.max_gap / (std::exp(T) + 1.0));
    throw PlanningError("solve_split: gap bound " + std::to_string(bound_T) + " at T exceeds " +
                            std::to_string(opt.max_gap) + "; delta <= " + std::to_string(needed) + " required",
                        needed);
  }
  std::vector<std::size_t> snap_steps;
  for (double t : opt.snapshot_times) snap_steps.push_back(static_cast<std::size_t>(std::llround(t / delta)));

  SplittingScheme scheme(v0, delta, dim, opt.tail_tol, opt.quadrature);
  ObstacleSolution sol;
  sol.dim = dim;
  sol.delta = delta;
  sol.quadrature_defect = scheme.table().quadrature_defect();
  sol.warning = scheme.table().warning();

  auto record = [&] {
    const std::size_t n = scheme.steps();
    sol.times.push_back(scheme.time());
    sol.R_upper.push_back(extract_boundary(scheme.upper(), opt.contact_tol_upper));
    sol.R_lower.push_back(extract_boundary(scheme.lower(), opt.contact_tol_lower));
    sol.gap_bound.push_back(scheme.gap_bound());
    sol.gap_achieved.push_back(scheme.gap_achieved());
    const bool periodic = opt.snapshot_every > 0 && n % opt.snapshot_every == 0;
    const bool listed = std::find(snap_steps.begin(), snap_steps.end(), n) != snap_steps.end();
    if (periodic || listed || n == n_steps)
      sol.snapshots.push_back(SplitSnapshot{scheme.time(), n, scheme.lower(), scheme.upper()});
  };
  record();
  for (std::size_t k = 0; k < n_steps; ++k) {
    scheme.step();
    if (opt.observer) opt.observer(scheme);
    record();
  }
  return sol;
}

inline ObstacleSolution solve_split(const InitialMeasure& m, double T, double delta, const RadialGrid& grid,
                                    const SplitOptions& opt = {}) {
  return solve_split(make_v0(m, grid), T, delta, m.dim, opt);
}

struct PenalizedOptions {
  /// Times at which to store fields (rounded to steps); T is always stored.
  std::vector<double> snapshot_times;
  /// Number of leading steps replaced by two backward-Euler half steps each.
  int rannacher_steps = 2;
  double fixed_point_tol = 1e-12;
  int fixed_point_max_iter = 200;
};

struct PenalizedSolution {
  std::vector<double> times;
  std::vector<GridFunction> snapshots;
  std::size_t steps = 0;
  /// Node updates that left [0,1] and were clamped.
  std::size_t clamp_count = 0;

  const GridFunction& at(double t) const {
    detail::require(!snapshots.empty(), "PenalizedSolution: no snapshots stored");
    std::size_t best = 0;
    for (std::size_t k = 1; k < times.size(); ++k)
      if (std::abs(times[k] - t) < std::abs(times[best] - t)) best = k;
    return snapshots[best];
  }
};

namespace detail {

// Constant tridiagonal system (I - theta dt L) u = r on nodes 1..n, pre-factored.
class ImplicitOperator {
 public:
  ImplicitOperator(const std::vector<double>& lo, const std::vector<double>& di, const std::vector<double>& up,
                   double scale)
      : n_(di.size()), sub_(n_), cp_(n_), inv_(n_) {
    for (std::size_t k = 0; k < n_; ++k) sub_[k] = -scale * lo[k];
    double prev_cp = 0.0;
    for (std::size_t k = 0; k < n_; ++k) {
      const double diag = 1.0 - scale * di[k];
      const double denom = diag - (k > 0 ? sub_[k] * prev_cp : 0.0);
      inv_[k] = 1.0 / denom;
      cp_[k] = (k + 1 < n_ ? -scale * up[k] : 0.0) * inv_[k];
      prev_cp = cp_[k];
    }
  }
  void solve(std::vector<double>& r) const {
    r[0] *= inv_[0];
    for (std::size_t k = 1; k < n_; ++k) r[k] = (r[k] - sub_[k] * r[k - 1]) * inv_[k];
    for (std::size_t k = n_ - 1; k-- > 0;) r[k] -= cp_[k] * r[k + 1];
  }

 private:
  std::size_t n_;
  std::vector<double> sub_, cp_, inv_;
};

}  // namespace detail

/// Crank-Nicolson for v_t = v_xx - (d-1)/x v_x + v - v^n with v(0) = 0 and zero
/// slope at x_max; the reaction term is resolved by fixed-point iteration.
inline PenalizedSolution solve_penalized(const GridFunction& v0, int dim, double T, double n_penalty, double dt,
                                         const PenalizedOptions& opt = {}) {
  detail::require(n_penalty >= 2.0, "solve_penalized: penalty exponent must be >= 2");
  detail::require(dt > 0.0 && T >= 0.0, "solve_penalized: dt must be positive and T non-negative");
  detail::require(dim >= 1, "solve_penalized: dim must be >= 1");
  const RadialGrid& grid = v0.grid;
  const std::size_t m = grid.cells();  // unknowns at nodes 1..m
  const double h = grid.spacing();
  const double ih2 = 1.0 / (h * h);

  std::vector<double> lo(m, 0.0), di(m, 0.0), up(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = k + 1;
    if (i == m) {
      lo[k] = 2.0 * ih2;
      di[k] = -2.0 * ih2;
      continue;
    }
    const double b = (dim - 1) / grid.node(i);
    const bool central = i > 1 && 0.5 * b * h <= 1.0;
    if (central) {
      lo[k] = ih2 + 0.5 * b / h;
      di[k] = -2.0 * ih2;
      up[k] = ih2 - 0.5 * b / h;
    } else {
      lo[k] = ih2 + b / h;
      di[k] = -2.0 * ih2 - b / h;
      up[k] = ih2;
    }
  }
  auto apply_L = [&](const std::vector<double>& u, std::size_t k) {
    const double left = k > 0 ? u[k - 1] : 0.0;
    const double right = k + 1 < m ? u[k + 1] : 0.0;
    return lo[k] * left + di[k] * u[k] + up[k] * right;
  };
  auto g = [n_penalty](double v) { return v - std::pow(std::clamp(v, 0.0, 1.0), n_penalty); };

  const std::size_t n_steps = static_cast<std::size_t>(std::llround(T / dt));
  detail::require(std::abs(static_cast<double>(n_steps) * dt - T) <= 1e-9 * std::max(1.0, T), "solve_penalized: dt must divide T");
  std::vector<std::size_t> snap_steps;
  for (double t : opt.snapshot_times) snap_steps.push_back(static_cast<std::size_t>(std::llround(t / dt)));

  // Crank-Nicolson with step dt and backward Euler with step dt/2 share I - (dt/2) L.
  const detail::ImplicitOperator op(lo, di, up, 0.5 * dt);

  PenalizedSolution sol;
  std::vector<double> u(v0.values.begin() + 1, v0.values.end());
  for (double& x : u) x = std::clamp(x, 0.0, 1.0);
  std::vector<double> rhs(m), iter(m), prev(m), gu(m);

  auto store = [&](std::size_t step) {
    GridFunction f(grid, std::vector<double>(grid.size(), 0.0), u.back());
    std::copy(u.begin(), u.end(), f.values.begin() + 1);
    sol.times.push_back(static_cast<double>(step) * dt);
    sol.snapshots.push_back(std::move(f));
  };

  // theta = 1/2 with tau = dt (Crank-Nicolson) or theta = 1 with tau = dt/2.
  auto advance = [&](double tau, double theta) {
    for (std::size_t k = 0; k < m; ++k) {
      gu[k] = g(u[k]);
      rhs[k] = u[k] + (1.0 - theta) * tau * (apply_L(u, k) + gu[k]);
    }
    iter = u;
    for (int it = 0;; ++it) {
      if (it >= opt.fixed_point_max_iter)
        throw StepSizeError("solve_penalized: reaction fixed point did not converge; reduce dt (dt=" +
                            std::to_string(dt) + ", n=" + std::to_string(n_penalty) + ")");
      prev = iter;
      for (std::size_t k = 0; k < m; ++k) iter[k] = rhs[k] + theta * tau * g(prev[k]);
      op.solve(iter);
      double change = 0.0;
      for (std::size_t k = 0; k < m; ++k) change = std::max(change, std::abs(iter[k] - prev[k]));
      if (!std::isfinite(change))
        throw StepSizeError("solve_penalized: reaction fixed point diverged; reduce dt (dt=" + std::to_string(dt) + ")");
      if (change <= opt.fixed_point_tol) break;
    }
    for (std::size_t k = 0; k < m; ++k) {
      if (iter[k] < 0.0 || iter[k] > 1.0) ++sol.clamp_count;
      u[k] = std::clamp(iter[k], 0.0, 1.0);
    }
  };

  if (std::find(snap_steps.begin(), snap_steps.end(), 0) != snap_steps.end()) store(0);
  for (std::size_t s = 1; s <= n_steps; ++s) {
    if (static_cast<int>(s) <= opt.rannacher_steps) {
      advance(0.5 * dt, 1.0);
      advance(0.5 * dt, 1.0);
    } else {
      advance(dt, 0.5);
    }
    const bool listed = std::find(snap_steps.begin(), snap_steps.end(), s) != snap_steps.end();
    if (listed || s == n_steps) store(s);
  }
  if (n_steps == 0) store(0);
  sol.steps = n_steps;
  return sol;
}

inline PenalizedSolution solve_penalized(const InitialMeasure& m, double T, double n_penalty, const RadialGrid& grid,
                                         double dt, const PenalizedOptions& opt = {}) {
  return solve_penalized(make_v0(m, grid), m.dim, T, n_penalty, dt, opt);
}

}  // namespace beefbp
