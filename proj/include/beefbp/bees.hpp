#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "beefbp/error.hpp"
#include "beefbp/grid.hpp"
#include "beefbp/measure.hpp"

namespace beefbp {

enum class SelectionOrder {
  /// Append the offspring, then remove the farthest of the N+1 particles.
  duplicate_then_remove,
  /// Remove the farthest of the N particles, then duplicate one of the N-1 survivors.
  remove_then_duplicate,
};

struct BeesOptions {
  double branching_rate = 1.0;
  SelectionOrder order = SelectionOrder::duplicate_then_remove;
  /// Test mode: particles do not move.
  bool freeze_diffusion = false;
};

/// N particles in R^d with diffusivity sqrt(2), branching at rate 1 each, and
/// removal of the particle farthest from the origin at every branching.
struct ParticleEnsemble {
  int dim = 1;
  std::size_t n = 0;
  std::vector<double> positions;  // n x dim, row-major
  double time = 0.0;
  Rng rng;
  std::uint64_t n_branch_events = 0;
  BeesOptions options{};

  std::span<const double> particle(std::size_t k) const {
    return {positions.data() + k * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  std::span<double> particle(std::size_t k) {
    return {positions.data() + k * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  double norm2(std::size_t k) const {
    double s = 0.0;
    for (double x : particle(k)) s += x * x;
    return s;
  }
  std::size_t size() const noexcept { return n; }
};

inline ParticleEnsemble init_ensemble(const InitialMeasure& m, std::size_t N, int dim, std::uint64_t seed,
                                      std::uint64_t replica = 0, BeesOptions opt = {}) {
  detail::require(N >= 2, "init_ensemble: need N >= 2");
  detail::require(dim == m.dim, "init_ensemble: dimension does not match the initial measure");
  detail::require(opt.branching_rate >= 0.0, "init_ensemble: branching rate must be non-negative");
  if (!m.samplable())
    throw DomainError("init_ensemble: initial measure '" + to_string(m.kind) + "' cannot be sampled");
  ParticleEnsemble e;
  e.dim = dim;
  e.n = N;
  e.positions.reserve((N + 1) * static_cast<std::size_t>(dim));
  e.positions.resize(N * static_cast<std::size_t>(dim));
  e.rng = make_stream(seed, replica);
  e.options = opt;
  for (std::size_t k = 0; k < N; ++k) m.sample(e.rng, e.particle(k));
  return e;
}

namespace detail {

inline void diffuse(ParticleEnsemble& e, double dt) {
  if (e.options.freeze_diffusion || dt <= 0.0) return;
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sd = std::sqrt(2.0 * dt);
  for (double& x : e.positions) x += sd * gauss(e.rng);
}

// Index of the largest norm among the first `count` particles; ties go to the lowest index.
inline std::size_t argmax_norm(const ParticleEnsemble& e, std::size_t count) {
  std::size_t best = 0;
  double best_n2 = e.norm2(0);
  for (std::size_t k = 1; k < count; ++k) {
    const double n2 = e.norm2(k);
    if (n2 > best_n2) {
      best = k;
      best_n2 = n2;
    }
  }
  return best;
}

}  // namespace detail

/// One selection event with the given parent at the current positions. Returns
/// the index of the removed particle before compaction (N denotes the offspring).
inline std::size_t branch_event(ParticleEnsemble& e, std::size_t parent) {
  detail::require(parent < e.n, "branch_event: parent index out of range");
  const auto d = static_cast<std::size_t>(e.dim);
  std::size_t removed = 0;
  if (e.options.order == SelectionOrder::duplicate_then_remove) {
    e.positions.resize((e.n + 1) * d);
    std::copy_n(e.positions.begin() + static_cast<std::ptrdiff_t>(parent * d), d,
                e.positions.begin() + static_cast<std::ptrdiff_t>(e.n * d));
    removed = detail::argmax_norm(e, e.n + 1);
    if (removed != e.n) std::copy_n(e.positions.begin() + static_cast<std::ptrdiff_t>(e.n * d), d,
                                    e.positions.begin() + static_cast<std::ptrdiff_t>(removed * d));
    e.positions.resize(e.n * d);
  } else {
    removed = detail::argmax_norm(e, e.n);
    detail::require(parent != removed, "branch_event: the removed particle cannot be the parent");
    std::copy_n(e.positions.begin() + static_cast<std::ptrdiff_t>(parent * d), d,
                e.positions.begin() + static_cast<std::ptrdiff_t>(removed * d));
  }
  ++e.n_branch_events;
  return removed;
}

/// Runs the process up to t_target: exponential waiting times at total rate
/// N * branching_rate, exact Gaussian displacement over each waiting time, and a
/// selection event at each branching.
inline void advance(ParticleEnsemble& e, double t_target) {
  detail::require(t_target >= e.time, "advance: target time is in the past");
  const double rate = e.options.branching_rate * static_cast<double>(e.n);
  std::uniform_int_distribution<std::size_t> pick_all(0, e.n - 1), pick_rest(0, e.n - 2);
  while (true) {
    double wait = std::numeric_limits<double>::infinity();
    if (rate > 0.0) wait = std::exponential_distribution<double>(rate)(e.rng);
    if (e.time + wait > t_target) {
      detail::diffuse(e, t_target - e.time);
      e.time = t_target;
      return;
    }
    detail::diffuse(e, wait);
    e.time += wait;
    if (e.options.order == SelectionOrder::duplicate_then_remove) {
      branch_event(e, pick_all(e.rng));
    } else {
      // Parent uniform among the N-1 particles other than the farthest one.
      const std::size_t far = detail::argmax_norm(e, e.n);
      std::size_t parent = pick_rest(e.rng);
      if (parent >= far) ++parent;
      branch_event(e, parent);
    }
  }
}

/// v^N(x_i) = #{k : |X_k| < x_i} / N.
inline GridFunction empirical_radial_cdf(const ParticleEnsemble& e, const RadialGrid& grid) {
  std::vector<double> norms(e.n);
  for (std::size_t k = 0; k < e.n; ++k) norms[k] = std::sqrt(e.norm2(k));
  std::sort(norms.begin(), norms.end());
  GridFunction f(grid, std::vector<double>(grid.size(), 0.0), 1.0);
  const auto N = static_cast<double>(e.n);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto below = std::lower_bound(norms.begin(), norms.end(), grid.node(i)) - norms.begin();
    f[i] = static_cast<double>(below) / N;
  }
  return f;
}

/// Largest particle norm.
inline double ensemble_radius(const ParticleEnsemble& e) {
  return std::sqrt(e.norm2(detail::argmax_norm(e, e.n)));
}

}  // namespace beefbp
