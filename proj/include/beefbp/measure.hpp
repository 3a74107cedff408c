#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "beefbp/error.hpp"
#include "beefbp/grid.hpp"
#include "beefbp/steady.hpp"

namespace beefbp {

using Rng = std::mt19937_64;

/// Deterministic generator for stream `index` under `seed`.
inline Rng make_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

enum class MeasureKind { uniform_ball, sphere_shell, indicator_step, constant_one, table, steady_V };

inline std::string to_string(MeasureKind k) {
  switch (k) {
    case MeasureKind::uniform_ball: return "uniform_ball";
    case MeasureKind::sphere_shell: return "sphere_shell";
    case MeasureKind::indicator_step: return "indicator_step";
    case MeasureKind::constant_one: return "constant_one";
    case MeasureKind::table: return "table";
    case MeasureKind::steady_V: return "steady_V";
  }
  return "?";
}

inline MeasureKind measure_kind_from_string(const std::string& s) {
  for (auto k : {MeasureKind::uniform_ball, MeasureKind::sphere_shell, MeasureKind::indicator_step,
                 MeasureKind::constant_one, MeasureKind::table, MeasureKind::steady_V})
    if (to_string(k) == s) return k;
  throw DomainError("unknown initial measure kind '" + s + "'");
}

/// Initial data: a radial CDF v0 and, for probability measures, a sampler.
struct InitialMeasure {
  MeasureKind kind = MeasureKind::constant_one;
  int dim = 1;
  double radius = 1.0;  // uniform_ball, sphere_shell
  double c = 1.0;       // indicator_step
  double K = 1.0;       // indicator_step
  std::vector<double> table_x, table_v;

  static InitialMeasure uniform_ball(int dim, double r) { return make(MeasureKind::uniform_ball, dim, r); }
  static InitialMeasure sphere_shell(int dim, double r) { return make(MeasureKind::sphere_shell, dim, r); }
  static InitialMeasure constant_one(int dim) { return make(MeasureKind::constant_one, dim, 1.0); }
  static InitialMeasure steady_V(int dim) { return make(MeasureKind::steady_V, dim, 1.0); }
  static InitialMeasure indicator_step(int dim, double c, double K) {
    auto m = make(MeasureKind::indicator_step, dim, 1.0);
    m.c = c;
    m.K = K;
    m.validate();
    return m;
  }
  /// Radial CDF given by piecewise-linear samples (x_k, v_k) with x_0 = 0, v_0 = 0.
  static InitialMeasure table(int dim, std::vector<double> xs, std::vector<double> vs) {
    auto m = make(MeasureKind::table, dim, 1.0);
    m.table_x = std::move(xs);
    m.table_v = std::move(vs);
    m.validate();
    return m;
  }

  void validate() const {
    detail::require(dim >= 1 && dim <= 10, "InitialMeasure: dim must lie in 1..10");
    switch (kind) {
      case MeasureKind::uniform_ball:
      case MeasureKind::sphere_shell:
        detail::require(std::isfinite(radius) && radius > 0.0, "InitialMeasure: radius must be positive");
        break;
      case MeasureKind::indicator_step:
        detail::require(c > 0.0 && c <= 1.0, "InitialMeasure: indicator_step needs c in (0,1]");
        detail::require(std::isfinite(K) && K > 0.0, "InitialMeasure: indicator_step needs K > 0");
        break;
      case MeasureKind::table: {
        detail::require(table_x.size() >= 2 && table_x.size() == table_v.size(),
                        "InitialMeasure: table needs matching x and v samples");
        detail::require(table_x.front() == 0.0 && table_v.front() == 0.0, "InitialMeasure: table must start at (0,0)");
        for (std::size_t k = 1; k < table_x.size(); ++k) {
          detail::require(table_x[k] > table_x[k - 1], "InitialMeasure: table x must increase");
          detail::require(table_v[k] >= table_v[k - 1], "InitialMeasure: table v must be non-decreasing");
        }
        detail::require(table_v.back() <= 1.0, "InitialMeasure: table v must stay in [0,1]");
        break;
      }
      default: break;
    }
  }

  /// Radius beyond which v0 is constant.
  double support_radius() const {
    switch (kind) {
      case MeasureKind::uniform_ball:
      case MeasureKind::sphere_shell: return radius;
      case MeasureKind::indicator_step: return K;
      case MeasureKind::constant_one: return 0.0;
      case MeasureKind::steady_V: return steady().R_inf;
      case MeasureKind::table: {
        std::size_t k = table_v.size() - 1;
        while (k > 0 && table_v[k - 1] == table_v.back()) --k;
        return table_x[k];
      }
    }
    return 0.0;
  }

  /// v0(x) with the upper value taken at jumps.
  double v0(double x) const {
    switch (kind) {
      case MeasureKind::uniform_ball: return std::min(1.0, std::pow(x / radius, dim));
      case MeasureKind::sphere_shell: return x >= radius ? 1.0 : 0.0;
      case MeasureKind::indicator_step: return x >= K ? c : 0.0;
      case MeasureKind::constant_one: return x > 0.0 ? 1.0 : 0.0;
      case MeasureKind::steady_V: return eval_V(steady(), x);
      case MeasureKind::table: {
        if (x >= table_x.back()) return table_v.back();
        const auto it = std::upper_bound(table_x.begin(), table_x.end(), x);
        const std::size_t k = static_cast<std::size_t>(it - table_x.begin());
        const double f = (x - table_x[k - 1]) / (table_x[k] - table_x[k - 1]);
        return table_v[k - 1] + f * (table_v[k] - table_v[k - 1]);
      }
    }
    return 0.0;
  }

  double total_mass() const {
    switch (kind) {
      case MeasureKind::indicator_step: return c;
      case MeasureKind::table: return table_v.back();
      default: return 1.0;
    }
  }

  bool samplable() const {
    switch (kind) {
      case MeasureKind::uniform_ball:
      case MeasureKind::sphere_shell:
      case MeasureKind::steady_V: return true;
      case MeasureKind::table: return table_v.back() == 1.0;
      default: return false;
    }
  }

  /// One draw from the measure, written into out (size dim).
  void sample(Rng& rng, std::span<double> out) const {
    detail::require(out.size() == static_cast<std::size_t>(dim), "InitialMeasure::sample: wrong output size");
    if (!samplable())
      throw DomainError("InitialMeasure: kind '" + to_string(kind) + "' is not a probability measure and cannot be sampled");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double r = 0.0;
    switch (kind) {
      case MeasureKind::uniform_ball: r = radius * std::pow(unif(rng), 1.0 / dim); break;
      case MeasureKind::sphere_shell: r = radius; break;
      case MeasureKind::steady_V: r = invert_cdf(unif(rng)); break;
      case MeasureKind::table: r = invert_cdf(unif(rng)); break;
      default: break;
    }
    random_direction(rng, out);
    for (double& v : out) v *= r;
  }

  static void random_direction(Rng& rng, std::span<double> out) {
    if (out.size() == 1) {
      out[0] = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
      return;
    }
    std::normal_distribution<double> gauss(0.0, 1.0);
    double n2 = 0.0;
    do {
      n2 = 0.0;
      for (double& v : out) {
        v = gauss(rng);
        n2 += v * v;
      }
    } while (n2 == 0.0);
    const double inv = 1.0 / std::sqrt(n2);
    for (double& v : out) v *= inv;
  }

 private:
  SteadyState steady_{};

  static InitialMeasure make(MeasureKind k, int dim, double r) {
    InitialMeasure m;
    m.kind = k;
    m.dim = dim;
    m.radius = r;
    if (k != MeasureKind::table) m.validate();
    if (k == MeasureKind::steady_V) m.steady_ = compute_steady(dim);
    return m;
  }

  SteadyState steady() const { return steady_.dim == dim && steady_.R_inf > 0.0 ? steady_ : compute_steady(dim); }

  // Smallest r with v0(r) >= u, by bisection on the monotone CDF.
  double invert_cdf(double u) const {
    double lo = 0.0, hi = support_radius();
    for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      (v0(mid) >= u ? hi : lo) = mid;
    }
    return hi;
  }
};

/// Default grid extent: max(support radius, R_inf) + 3.
inline double default_x_max(const InitialMeasure& m) {
  return std::max(m.support_radius(), compute_steady(m.dim).R_inf) + 3.0;
}

/// Node samples of v0 with v0(0) = 0 and the right extension set to the total mass.
inline GridFunction make_v0(const InitialMeasure& m, const RadialGrid& grid) {
  m.validate();
  if (m.support_radius() > grid.x_max())
    throw DomainError("make_v0: support radius " + std::to_string(m.support_radius()) + " exceeds grid x_max " +
                      std::to_string(grid.x_max()));
  GridFunction f(grid, std::vector<double>(grid.size(), 0.0), m.total_mass());
  for (std::size_t i = 1; i < grid.size(); ++i) f[i] = m.v0(grid.node(i));
  return f;
}

}  // namespace beefbp
