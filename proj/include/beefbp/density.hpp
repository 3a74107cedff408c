#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "beefbp/error.hpp"
#include "beefbp/grid.hpp"
#include "beefbp/measure.hpp"
#include "beefbp/obstacle.hpp"
#include "beefbp/parallel.hpp"

namespace beefbp {

/// Piecewise-linear boundary radius t -> R_t.
class BoundaryPath {
 public:
  BoundaryPath() = default;
  BoundaryPath(std::vector<double> times, std::vector<double> radii) : t_(std::move(times)), r_(std::move(radii)) {
    detail::require(!t_.empty() && t_.size() == r_.size(), "BoundaryPath: need matching non-empty times and radii");
    detail::require(t_.front() >= 0.0, "BoundaryPath: times must start at or after 0");
    for (std::size_t k = 0; k < t_.size(); ++k) {
      detail::require(std::isfinite(r_[k]) && r_[k] > 0.0, "BoundaryPath: radii must be finite and positive");
      if (k > 0) detail::require(t_[k] > t_[k - 1], "BoundaryPath: times must increase");
    }
  }

  static BoundaryPath constant(double radius, double t_end) { return BoundaryPath({0.0, t_end}, {radius, radius}); }

  /// Path from the per-step boundary series of a splitting solution, taken from
  /// the upper enclosure or else the lower one.
  static BoundaryPath from_solution(const ObstacleSolution& sol, bool use_upper = true) {
    const auto& r = use_upper ? sol.R_upper : sol.R_lower;
    return BoundaryPath(sol.times, r);
  }

  double start() const noexcept { return t_.front(); }
  double end() const noexcept { return t_.back(); }
  const std::vector<double>& times() const noexcept { return t_; }
  const std::vector<double>& radii() const noexcept { return r_; }

  double at(double t) const {
    if (t_.size() == 1 || t <= t_.front()) return r_.front();
    if (t >= t_.back()) return r_.back();
    const auto it = std::upper_bound(t_.begin(), t_.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - t_.begin());
    const double f = (t - t_[k - 1]) / (t_[k] - t_[k - 1]);
    return r_[k - 1] + f * (r_[k] - r_[k - 1]);
  }

 private:
  std::vector<double> t_, r_;
};

enum class DensityLayout { box, radial };

/// Histogram estimate of a density on R^d: either a cube [-extent, extent]^d with
/// `cells` bins per side, or `cells` spherical shells covering [0, extent].
struct DensityEstimate {
  DensityLayout layout = DensityLayout::radial;
  int dim = 1;
  double extent = 1.0;
  std::size_t cells = 1;
  double time = 0.0;
  std::vector<double> values;
  std::vector<double> std_error;
  std::size_t n_paths = 0;
  double dt = 0.0;

  std::size_t size() const noexcept { return values.size(); }
  double width() const noexcept {
    return layout == DensityLayout::box ? 2.0 * extent / static_cast<double>(cells) : extent / static_cast<double>(cells);
  }

  double cell_volume(std::size_t i) const {
    const double h = width();
    if (layout == DensityLayout::box) return std::pow(h, dim);
    const double omega = std::pow(std::numbers::pi, 0.5 * dim) / std::tgamma(0.5 * dim + 1.0);
    const double a = static_cast<double>(i) * h, b = a + h;
    return omega * (std::pow(b, dim) - std::pow(a, dim));
  }

  /// Shell radii [inner, outer] for radial layout.
  std::pair<double, double> shell(std::size_t i) const {
    const double h = width();
    return {static_cast<double>(i) * h, static_cast<double>(i + 1) * h};
  }

  /// Cell center coordinates for box layout.
  std::vector<double> center(std::size_t i) const {
    std::vector<double> c(static_cast<std::size_t>(dim));
    const double h = width();
    for (int k = 0; k < dim; ++k) {
      c[static_cast<std::size_t>(k)] = -extent + (static_cast<double>(i % cells) + 0.5) * h;
      i /= cells;
    }
    return c;
  }

  /// Smallest and largest norm over a cell.
  std::pair<double, double> norm_range(std::size_t i) const {
    if (layout == DensityLayout::radial) return shell(i);
    const auto c = center(i);
    const double h = 0.5 * width();
    double lo2 = 0.0, hi2 = 0.0;
    for (double x : c) {
      const double a = std::abs(x) - h, b = std::abs(x) + h;
      lo2 += a > 0.0 ? a * a : 0.0;
      hi2 += b * b;
    }
    return {std::sqrt(lo2), std::sqrt(hi2)};
  }

  double total_mass() const {
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i) m += values[i] * cell_volume(i);
    return m;
  }

  /// Standard error of total_mass (multinomial cell counts).
  double total_mass_stderr(double weight) const {
    const double p = total_mass() / weight;
    return weight * std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(std::max<std::size_t>(n_paths, 1)));
  }
};

namespace detail {

inline double unit_ball_volume(int d) { return std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0); }

}  // namespace detail

/// u(r) = v'(r) / (d omega_d r^{d-1}) as shell averages (v(x_{i+1}) - v(x_i)) / |shell_i|
/// over the grid cells; cells beyond the contact radius of v are zero.
inline DensityEstimate radial_density(const GridFunction& v, int dim, double contact_tol = 1e-8) {
  detail::require(dim >= 1, "radial_density: dim must be >= 1");
  if (!v.is_nondecreasing(1e-12)) throw DomainError("radial_density: v must be non-decreasing");
  DensityEstimate est;
  est.layout = DensityLayout::radial;
  est.dim = dim;
  est.extent = v.grid.x_max();
  est.cells = v.grid.cells();
  est.values.assign(est.cells, 0.0);
  est.std_error.assign(est.cells, 0.0);
  const double R = extract_boundary(v, contact_tol);
  for (std::size_t i = 0; i < est.cells; ++i) {
    if (v.grid.node(i) >= R) break;
    est.values[i] = (v[i + 1] - v[i]) / est.cell_volume(i);
  }
  return est;
}

inline DensityEstimate radial_density(const GridFunction& v, const SteadyState& s, double contact_tol = 1e-8) {
  return radial_density(v, s.dim, contact_tol);
}

/// Value of a radial estimate at radius r (shell containing r); 0 outside.
inline double radial_value(const DensityEstimate& est, double r) {
  detail::require(est.layout == DensityLayout::radial, "radial_value: estimate is not radial");
  if (r < 0.0 || r >= est.extent) return 0.0;
  const auto i = std::min(est.cells - 1, static_cast<std::size_t>(r / est.width()));
  return est.values[i];
}

struct DensityGridSpec {
  DensityLayout layout = DensityLayout::radial;
  double extent = 3.0;
  std::size_t cells = 60;
};

struct KilledBMOptions {
  std::size_t n_paths = 100000;
  double dt = 1e-4;
  std::uint64_t seed = 1;
  DensityGridSpec grid{};
  bool bridge_correction = true;
};

/// Draws one starting point of the given dimension.
using PointSampler = std::function<void(Rng&, std::span<double>)>;

struct KilledBMResult {
  DensityEstimate estimate;
  std::size_t survivors = 0;
  std::size_t outside_grid = 0;
};

/// Monte Carlo estimate of u(y,t) = e^t E[1{B_t in dy, tau >= t}] for Brownian motion
/// with diffusivity sqrt(2) killed on leaving the ball of radius path.at(s).
inline KilledBMResult killed_bm_density(const PointSampler& sampler, int dim, const BoundaryPath& path, double t,
                                        const KilledBMOptions& opt) {
  detail::require(dim >= 1, "killed_bm_density: dim must be >= 1");
  detail::require(t > 0.0 && opt.dt > 0.0 && opt.n_paths > 0, "killed_bm_density: need t, dt, n_paths > 0");
  if (path.start() > 0.0 || path.end() < t)
    throw DomainError("killed_bm_density: boundary path covers [" + std::to_string(path.start()) + ", " +
                      std::to_string(path.end()) + "] but t = " + std::to_string(t));
  const auto n_steps = static_cast<std::size_t>(std::llround(t / opt.dt));
  detail::require(n_steps >= 1 && std::abs(static_cast<double>(n_steps) * opt.dt - t) <= 1e-9 * t,
                  "killed_bm_density: dt must divide t");

  DensityEstimate est;
  est.layout = opt.grid.layout;
  est.dim = dim;
  est.extent = opt.grid.extent;
  est.cells = opt.grid.cells;
  est.time = t;
  est.n_paths = opt.n_paths;
  est.dt = opt.dt;
  const std::size_t n_cells =
      est.layout == DensityLayout::box ? static_cast<std::size_t>(std::pow(est.cells, dim)) : est.cells;

  std::vector<double> radius(n_steps + 1);
  for (std::size_t k = 0; k <= n_steps; ++k) radius[k] = path.at(static_cast<double>(k) * opt.dt);

  // Final cell of each path, or -1 if killed, -2 if it survived outside the grid.
  std::vector<std::int64_t> final_cell(opt.n_paths, -1);
  const double sd = std::sqrt(2.0 * opt.dt);
  const double h = est.width();
  const auto ud = static_cast<std::size_t>(dim);

  parallel_for(opt.n_paths, [&](std::size_t p) {
    Rng rng = make_stream(opt.seed, p);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> x(ud);
    sampler(rng, x);
    double r2 = 0.0;
    for (double v : x) r2 += v * v;
    double r = std::sqrt(r2);
    for (std::size_t k = 0; k < n_steps; ++k) {
      r2 = 0.0;
      for (double& v : x) {
        v += sd * gauss(rng);
        r2 += v * v;
      }
      const double r_new = std::sqrt(r2);
      if (r_new >= radius[k + 1]) return;
      // A start on the boundary is not a crossing.
      if (opt.bridge_correction && !(k == 0 && r >= radius[0])) {
        const double a = radius[k] - r, b = radius[k + 1] - r_new;
        const double expo = a * b / opt.dt;
        if (expo < 40.0 && unif(rng) < std::exp(-expo)) return;
      }
      r = r_new;
    }
    std::int64_t cell = 0;
    if (est.layout == DensityLayout::radial) {
      const auto i = static_cast<std::size_t>(r / h);
      cell = i < est.cells ? static_cast<std::int64_t>(i) : -2;
    } else {
      std::size_t idx = 0, stride = 1;
      for (std::size_t k = 0; k < ud; ++k) {
        const double s = (x[k] + est.extent) / h;
        if (s < 0.0 || s >= static_cast<double>(est.cells)) {
          cell = -2;
          break;
        }
        idx += static_cast<std::size_t>(s) * stride;
        stride *= est.cells;
      }
      if (cell != -2) cell = static_cast<std::int64_t>(idx);
    }
    final_cell[p] = cell;
  });

  KilledBMResult res;
  std::vector<std::size_t> count(n_cells, 0);
  for (auto c : final_cell) {
    if (c == -1) continue;
    ++res.survivors;
    if (c == -2) {
      ++res.outside_grid;
      continue;
    }
    ++count[static_cast<std::size_t>(c)];
  }
  const double et = std::exp(t);
  const auto np = static_cast<double>(opt.n_paths);
  est.values.assign(n_cells, 0.0);
  est.std_error.assign(n_cells, 0.0);
  for (std::size_t i = 0; i < n_cells; ++i) {
    const double vol = est.cell_volume(i);
    const double q = static_cast<double>(count[i]) / np;
    est.values[i] = et * q / vol;
    est.std_error[i] = et * std::sqrt(q * (1.0 - q) / np) / vol;
  }
  res.estimate = std::move(est);
  return res;
}

inline KilledBMResult killed_bm_density(const InitialMeasure& m, const BoundaryPath& path, double t,
                                        const KilledBMOptions& opt) {
  if (!m.samplable())
    throw DomainError("killed_bm_density: initial measure '" + to_string(m.kind) + "' cannot be sampled");
  return killed_bm_density([&m](Rng& rng, std::span<double> out) { m.sample(rng, out); }, m.dim, path, t, opt);
}

/// Spherical-shell average of a box estimate. The mass of each box cell is split
/// over the shells by sub-cell midpoints, so total mass is preserved exactly.
inline DensityEstimate symmetrize(const DensityEstimate& box, double shell_width = 0.0) {
  detail::require(box.layout == DensityLayout::box, "symmetrize: expects a box estimate");
  const double h = shell_width > 0.0 ? shell_width : box.width();
  const double r_max = box.extent * std::sqrt(static_cast<double>(box.dim));
  DensityEstimate out;
  out.layout = DensityLayout::radial;
  out.dim = box.dim;
  out.cells = static_cast<std::size_t>(std::ceil(r_max / h));
  out.extent = static_cast<double>(out.cells) * h;
  out.time = box.time;
  out.n_paths = box.n_paths;
  out.dt = box.dt;
  const int sub = box.dim == 1 ? 64 : box.dim == 2 ? 8 : 4;
  std::size_t n_sub = 1;
  for (int k = 0; k < box.dim; ++k) n_sub *= static_cast<std::size_t>(sub);
  const double w = box.width();
  std::vector<double> mass(out.cells, 0.0), var(out.cells, 0.0), share(out.cells, 0.0);
  for (std::size_t i = 0; i < box.size(); ++i) {
    const double vol = box.cell_volume(i);
    const double m = box.values[i] * vol;
    const double se = box.std_error.empty() ? 0.0 : box.std_error[i] * vol;
    if (m == 0.0 && se == 0.0) continue;
    const auto c = box.center(i);
    std::fill(share.begin(), share.end(), 0.0);
    for (std::size_t q = 0; q < n_sub; ++q) {
      std::size_t rest = q;
      double r2 = 0.0;
      for (int k = 0; k < box.dim; ++k) {
        const double off = ((static_cast<double>(rest % sub) + 0.5) / sub - 0.5) * w;
        rest /= static_cast<std::size_t>(sub);
        const double x = c[static_cast<std::size_t>(k)] + off;
        r2 += x * x;
      }
      const auto s = std::min(out.cells - 1, static_cast<std::size_t>(std::sqrt(r2) / h));
      share[s] += 1.0 / static_cast<double>(n_sub);
    }
    for (std::size_t s = 0; s < out.cells; ++s) {
      if (share[s] == 0.0) continue;
      mass[s] += share[s] * m;
      var[s] += share[s] * se * se;
    }
  }
  out.values.resize(out.cells);
  out.std_error.resize(out.cells);
  for (std::size_t s = 0; s < out.cells; ++s) {
    const double vol = out.cell_volume(s);
    out.values[s] = mass[s] / vol;
    out.std_error[s] = std::sqrt(var[s]) / vol;
  }
  return out;
}

}  // namespace beefbp
