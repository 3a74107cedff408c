#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/poisson.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "beefbp/error.hpp"
#include "beefbp/grid.hpp"
#include "beefbp/parallel.hpp"

namespace beefbp {

/// Dimension, time and truncation tolerance for the radial kernel of
/// d-dimensional Brownian motion with diffusivity sqrt(2).
struct KernelParams {
  int dim = 1;
  double time = 1.0;
  double tail_tol = 1e-12;

  void validate() const {
    detail::require(dim >= 1, "KernelParams: dim must be >= 1");
    detail::require(std::isfinite(time) && time > 0.0, "KernelParams: time must be positive and finite");
    detail::require(tail_tol > 0.0 && tail_tol <= 1e-6, "KernelParams: tail_tol must lie in (0, 1e-6]");
  }
};

namespace detail {

inline void require_finite_nonneg(double v, const char* what) {
  require(std::isfinite(v) && v >= 0.0, std::string(what) + " must be finite and non-negative");
}

// sum_j Pois(j; mu) * P(a + j, zeta), summed outward from the Poisson mode.
inline double poisson_mixture_gamma_p(double a, double mu, double zeta, double tol) {
  using boost::math::gamma_p;
  if (zeta <= 0.0) return 0.0;
  if (mu <= 0.0) return gamma_p(a, zeta);

  // zeta^(a+j) e^(-zeta) / Gamma(a+j+1) = P(a+j, zeta) - P(a+j+1, zeta)
  auto step = [&](double j) { return boost::math::gamma_p_derivative(a + j + 1.0, zeta); };

  const double j0 = std::floor(mu);
  const double w0 = boost::math::pdf(boost::math::poisson_distribution<double>(mu), j0);
  const double p0 = gamma_p(a + j0, zeta);
  double sum = w0 * p0;

  double w = w0, p = p0;
  for (double j = j0;; j += 1.0) {
    w *= mu / (j + 1.0);
    p = std::max(0.0, p - step(j));
    sum += w * p;
    const double r = mu / (j + 2.0);
    if (w * p * r / (1.0 - r) < 0.5 * tol || w == 0.0 || p == 0.0) break;
  }

  w = w0;
  p = p0;
  for (double j = j0; j > 0.0; j -= 1.0) {
    w *= j / mu;
    p = std::min(1.0, p + step(j - 1.0));
    sum += w * p;
    const double r = (j - 1.0) / mu;
    if (w * r / (1.0 - r) < 0.5 * tol || w == 0.0) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

// sum_j Pois(j; mu) * zeta^(b+j-1) e^(-zeta) / Gamma(b+j), summed outward from
// the largest term. Terms are handled relative to the peak, so the result keeps
// full relative precision however small it is.
inline double poisson_mixture_gamma_pdf(double b, double mu, double zeta) {
  if (zeta <= 0.0) return 0.0;
  if (mu <= 0.0) return std::exp((b - 1.0) * std::log(zeta) - zeta - std::lgamma(b));

  const double mz = mu * zeta;
  const double disc = (b + 1.0) * (b + 1.0) - 4.0 * (b - mz);
  const double root = 0.5 * (-(b + 1.0) + std::sqrt(std::max(0.0, disc)));
  const double js = std::max(0.0, std::floor(root));

  const double peak = boost::math::pdf(boost::math::poisson_distribution<double>(mu), js) *
                      boost::math::gamma_p_derivative(b + js, zeta);
  constexpr double eps = 1e-17;
  double sum = 1.0;
  double term = 1.0;
  for (double j = js;; j += 1.0) {
    const double r = mz / ((j + 1.0) * (b + j));
    term *= r;
    sum += term;
    const double r_next = mz / ((j + 2.0) * (b + j + 1.0));
    if (term == 0.0 || (r_next < 1.0 && term * r_next / (1.0 - r_next) < eps * sum)) break;
  }
  term = 1.0;
  for (double j = js; j > 0.0; j -= 1.0) {
    const double r = j * (b + j - 1.0) / mz;
    term *= r;
    sum += term;
    const double r_next = (j - 1.0) * (b + j - 2.0) / mz;
    if (term == 0.0 || term * r_next / (1.0 - r_next) < eps * sum) break;
  }
  return peak * sum;
}

}  // namespace detail

/// P(|B_t| < x | |B_0| = y): the noncentral chi-squared CDF with d degrees of
/// freedom and noncentrality y^2/(2t), evaluated at x^2/(2t).
inline double radial_cdf_w(double y, double x, const KernelParams& p) {
  p.validate();
  detail::require_finite_nonneg(y, "radial_cdf_w: y");
  detail::require_finite_nonneg(x, "radial_cdf_w: x");
  const double four_t = 4.0 * p.time;
  return detail::poisson_mixture_gamma_p(0.5 * p.dim, y * y / four_t, x * x / four_t, p.tail_tol);
}

/// d = 1 closed form of w by the method of images.
inline double radial_cdf_images_1d(double y, double x, double t) {
  const double s = 2.0 * std::sqrt(t);
  return 0.5 * (std::erf((x - y) / s) + std::erf((x + y) / s));
}

/// d = 1 closed form of G by the method of images.
inline double green_kernel_images_1d(double y, double x, double t) {
  const double a = (x - y) * (x - y) / (4.0 * t);
  // e^{-(x-y)^2/4t} - e^{-(x+y)^2/4t} = e^{-a} (1 - e^{-xy/t})
  return std::exp(-a) * -std::expm1(-x * y / t) / std::sqrt(4.0 * std::numbers::pi * t);
}

/// G(y,x,t) from the term-wise y-derivative of the Poisson mixture, valid for any d.
inline double green_kernel_series(double y, double x, const KernelParams& p) {
  const double four_t = 4.0 * p.time;
  const double b = 0.5 * p.dim + 1.0;
  return y / (2.0 * p.time) * detail::poisson_mixture_gamma_pdf(b, y * y / four_t, x * x / four_t);
}

/// G(y,x,t) = -d/dy w(y,x,t).
inline double green_kernel(double y, double x, const KernelParams& p) {
  p.validate();
  detail::require(std::isfinite(y) && y > 0.0, "green_kernel: y must be positive and finite");
  detail::require_finite_nonneg(x, "green_kernel: x");
  if (x == 0.0) return 0.0;
  if (p.dim == 1) return green_kernel_images_1d(y, x, p.time);
  return green_kernel_series(y, x, p);
}

/// Adaptive quadrature of y -> G(y,x,t) over (0, inf); the exact value is w(0,x,t).
inline double green_y_integral(double x, const KernelParams& p) {
  p.validate();
  if (x == 0.0) return 0.0;
  using boost::math::quadrature::gauss_kronrod;
  const double s = std::sqrt(p.time);
  const double hi = x + 14.0 * s;
  auto f = [&](double y) { return y <= 0.0 ? 0.0 : green_kernel(y, x, p); };
  // Panels of width 2 sqrt(t) across the bulk of the kernel.
  std::vector<double> cuts{0.0};
  const double bulk = std::max(0.0, x - 14.0 * s);
  if (bulk > 0.0) cuts.push_back(bulk);
  for (double c = bulk + 2.0 * s; c < hi; c += 2.0 * s) cuts.push_back(c);
  cuts.push_back(hi);
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
    total += gauss_kronrod<double, 31>::integrate(f, cuts[k], cuts[k + 1], 10, 1e-13);
  return total;
}

/// Adaptive quadrature of x -> G(y,x,t) over (0, inf); at most 1.
inline double green_x_integral(double y, const KernelParams& p) {
  p.validate();
  using boost::math::quadrature::gauss_kronrod;
  const double s = std::sqrt(p.time);
  const double lo = std::max(0.0, y - 14.0 * s);
  const double hi = y + 14.0 * s + 2.0 * p.dim * s;
  auto f = [&](double x) { return green_kernel(y, x, p); };
  double total = 0.0;
  const int panels = 16;
  for (int k = 0; k < panels; ++k) {
    const double a = lo + (hi - lo) * k / panels, b = lo + (hi - lo) * (k + 1) / panels;
    total += gauss_kronrod<double, 31>::integrate(f, a, b, 10, 1e-13);
  }
  return total;
}

struct QuadratureOptions {
  /// Largest accepted |trapezoid mass + tail - w(0,x,t)| over the rows.
  double quad_tol = 1e-2;
  /// Kernel entries with |x - y| beyond this many sqrt(t) are dropped.
  double band_sigmas = 13.0;
};

/// Discretization of G_t on a grid: composite trapezoid over the nodes plus the
/// exact tail w(x_max, x, t) for the constant extension. Each row is rescaled so
/// that its total mass equals w(0, x_i, t); the operator is then positive and
/// maps [0,1]-valued data into [0,1]. The unscaled defect is reported.
class KernelTable {
 public:
  KernelTable(const RadialGrid& grid, const KernelParams& p, QuadratureOptions opt = {})
      : grid_(grid), params_(p), options_(opt) {
    p.validate();
    const std::size_t m = grid.size();
    const double h = grid.spacing();
    const double t = p.time;
    const auto band = static_cast<std::size_t>(std::ceil(opt.band_sigmas * std::sqrt(t) / h)) + 1;
    lo_.resize(m);
    offset_.resize(m + 1);
    for (std::size_t i = 0; i < m; ++i) {
      lo_[i] = std::max<std::size_t>(1, i > band ? i - band : 0);
      const std::size_t hi = std::min(m - 1, i + band);
      offset_[i + 1] = offset_[i] + (hi >= lo_[i] ? hi - lo_[i] + 1 : 0);
    }
    weights_.assign(offset_[m], 0.0);
    tail_.assign(m, 0.0);
    mass_.assign(m, 0.0);
    std::vector<double> defect(m, 0.0);

    parallel_for(m, [&](std::size_t i) {
      if (i == 0) return;
      const double x = grid.node(i);
      double raw = 0.0;
      double* row = weights_.data() + offset_[i];
      const std::size_t len = offset_[i + 1] - offset_[i];
      for (std::size_t k = 0; k < len; ++k) {
        const std::size_t j = lo_[i] + k;
        const double wq = (j == m - 1) ? 0.5 * h : h;
        row[k] = wq * green_kernel(grid.node(j), x, p);
        raw += row[k];
      }
      mass_[i] = radial_cdf_w(0.0, x, p);
      if (i + band >= m - 1) tail_[i] = radial_cdf_w(grid.x_max(), x, p);
      defect[i] = std::abs(raw + tail_[i] - mass_[i]);
      const double target = std::max(0.0, mass_[i] - tail_[i]);
      if (raw > 0.0) {
        const double scale = target / raw;
        for (std::size_t k = 0; k < len; ++k) row[k] *= scale;
      }
    });
    defect_ = *std::max_element(defect.begin(), defect.end());
    if (defect_ > opt.quad_tol)
      throw AccuracyError("KernelTable: quadrature defect " + std::to_string(defect_) + " exceeds tolerance " +
                          std::to_string(opt.quad_tol) + " (t=" + std::to_string(t) +
                          ", spacing=" + std::to_string(h) + "); refine the grid");
    if (std::sqrt(t) < 3.0 * h)
      warning_ = "kernel width sqrt(t)=" + std::to_string(std::sqrt(t)) + " is below 3 grid spacings (" +
                 std::to_string(3.0 * h) + "); quadrature is degraded";
  }

  const RadialGrid& grid() const noexcept { return grid_; }
  const KernelParams& params() const noexcept { return params_; }
  const QuadratureOptions& options() const noexcept { return options_; }
  /// max over rows of |trapezoid mass + tail - w(0,x_i,t)| before rescaling.
  double quadrature_defect() const noexcept { return defect_; }
  /// Non-empty when sqrt(t) < 3 * spacing.
  const std::string& warning() const noexcept { return warning_; }
  /// Row masses w(0, x_i, t).
  std::span<const double> mass() const noexcept { return mass_; }

  /// out_i = sum_j W_ij f_j + tail_i * beyond for node values f.
  void apply(std::span<const double> f, double beyond, std::span<double> out) const {
    const std::size_t m = grid_.size();
    detail::require(f.size() == m && out.size() == m, "KernelTable::apply: size mismatch");
    // Rows whose band only sees a constant suffix equal to the right extension
    // reduce to beyond * w(0, x_i, t).
    std::size_t suffix = m;
    while (suffix > 0 && f[suffix - 1] == beyond) --suffix;
    for (std::size_t i = 0; i < m; ++i) {
      if (i > 0 && lo_[i] >= suffix) {
        out[i] = beyond * mass_[i];
        continue;
      }
      const double* row = weights_.data() + offset_[i];
      const std::size_t len = offset_[i + 1] - offset_[i];
      const double* fj = f.data() + lo_[i];
      double s = 0.0;
      for (std::size_t k = 0; k < len; ++k) s += row[k] * fj[k];
      out[i] = s + tail_[i] * beyond;
    }
  }

  GridFunction apply(const GridFunction& f) const {
    detail::require(f.grid == grid_, "KernelTable::apply: grid mismatch");
    GridFunction out(grid_, std::vector<double>(grid_.size()), f.beyond_right);
    apply(f.values, f.beyond_right, out.values);
    return out;
  }

 private:
  RadialGrid grid_;
  KernelParams params_;
  QuadratureOptions options_;
  std::vector<std::size_t> lo_;
  std::vector<std::size_t> offset_;
  std::vector<double> weights_;
  std::vector<double> tail_;
  std::vector<double> mass_;
  double defect_ = 0.0;
  std::string warning_;
};

/// G_t f on the grid of f. The right extension of the result is f.beyond_right,
/// the limit of G_t f as x -> inf.
inline GridFunction apply_Gt(const GridFunction& f, const KernelParams& p, QuadratureOptions opt = {}) {
  return KernelTable(f.grid, p, opt).apply(f);
}

}  // namespace beefbp
