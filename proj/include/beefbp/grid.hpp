#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "beefbp/error.hpp"

namespace beefbp {

/// Uniform grid on [0, x_max] with nodes x_i = i * spacing, i = 0..n.
class RadialGrid {
 public:
  RadialGrid() = default;
  RadialGrid(double x_max, std::size_t n_cells) : x_max_(x_max), n_(n_cells) {
    detail::require(std::isfinite(x_max) && x_max > 0.0, "RadialGrid: x_max must be positive and finite");
    detail::require(n_cells >= 2, "RadialGrid: need at least two cells");
    spacing_ = x_max_ / static_cast<double>(n_);
  }

  /// Grid with the requested spacing; x_max is rounded up to a whole number of cells.
  static RadialGrid with_spacing(double x_max, double spacing) {
    detail::require(spacing > 0.0 && x_max > 0.0, "RadialGrid: spacing and x_max must be positive");
    auto n = static_cast<std::size_t>(std::ceil(x_max / spacing - 1e-9));
    return RadialGrid(static_cast<double>(n) * spacing, n);
  }

  double x_max() const noexcept { return x_max_; }
  std::size_t cells() const noexcept { return n_; }
  std::size_t size() const noexcept { return n_ + 1; }
  double spacing() const noexcept { return spacing_; }
  double node(std::size_t i) const noexcept {
    return i == n_ ? x_max_ : static_cast<double>(i) * spacing_;
  }

  std::vector<double> nodes() const {
    std::vector<double> x(size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = node(i);
    return x;
  }

  bool operator==(const RadialGrid& o) const noexcept { return x_max_ == o.x_max_ && n_ == o.n_; }

 private:
  double x_max_ = 1.0;
  std::size_t n_ = 2;
  double spacing_ = 0.5;
};

/// Node samples of a function on [0, x_max] with a constant extension beyond x_max.
struct GridFunction {
  RadialGrid grid;
  std::vector<double> values;
  double beyond_right = 0.0;

  GridFunction() = default;
  GridFunction(RadialGrid g, std::vector<double> v, double right)
      : grid(g), values(std::move(v)), beyond_right(right) {
    detail::require(values.size() == grid.size(), "GridFunction: value count does not match grid");
  }
  static GridFunction constant(const RadialGrid& g, double c) {
    return GridFunction(g, std::vector<double>(g.size(), c), c);
  }

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const noexcept { return values[i]; }
  double& operator[](std::size_t i) noexcept { return values[i]; }

  /// Piecewise-linear evaluation; constant beyond_right past x_max.
  double at(double x) const {
    if (x >= grid.x_max()) return x > grid.x_max() ? beyond_right : values.back();
    if (x <= 0.0) return values.front();
    const double s = x / grid.spacing();
    auto i = static_cast<std::size_t>(s);
    if (i >= grid.cells()) i = grid.cells() - 1;
    const double f = s - static_cast<double>(i);
    return values[i] * (1.0 - f) + values[i + 1] * f;
  }

  double sup_norm() const {
    double m = std::abs(beyond_right);
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }

  bool is_nondecreasing(double tol = 0.0) const {
    for (std::size_t i = 1; i < values.size(); ++i)
      if (values[i] < values[i - 1] - tol) return false;
    return beyond_right >= values.back() - tol;
  }
};

/// max_i |a_i - b_i| over the nodes (and the right extension).
inline double sup_distance(const GridFunction& a, const GridFunction& b) {
  detail::require(a.grid == b.grid, "sup_distance: grids differ");
  double m = std::abs(a.beyond_right - b.beyond_right);
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double sup_distance(std::span<const double> a, std::span<const double> b) {
  detail::require(a.size() == b.size(), "sup_distance: sizes differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline GridFunction midpoint(const GridFunction& a, const GridFunction& b) {
  detail::require(a.grid == b.grid, "midpoint: grids differ");
  GridFunction m = a;
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.5 * (a[i] + b[i]);
  m.beyond_right = 0.5 * (a.beyond_right + b.beyond_right);
  return m;
}

}  // namespace beefbp
