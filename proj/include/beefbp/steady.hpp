#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "beefbp/error.hpp"

namespace beefbp {

namespace detail {

// S_nu(x) = sum_k (-1)^k (x/2)^{2k} / (k! Gamma(k + nu + 1)), so that
// J_nu(x) = (x/2)^nu S_nu(x). Entire in x; valid for nu > -1.
inline double scaled_bessel_series(double nu, double x) {
  const double q = 0.25 * x * x;
  double term = 1.0 / std::tgamma(nu + 1.0);
  double sum = term;
  for (int k = 1; k < 500; ++k) {
    term *= -q / (static_cast<double>(k) * (k + nu));
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum) && k > q) break;
  }
  return sum;
}

inline bool is_half_integer(double nu) {
  const double twice = 2.0 * nu;
  return std::abs(twice - std::round(twice)) < 1e-12 && static_cast<long>(std::round(twice)) % 2 != 0;
}

inline bool is_integer(double nu) { return std::abs(nu - std::round(nu)) < 1e-12; }

// Half-integer orders by upward recurrence from J_{-1/2}, J_{1/2}; stable while
// the order stays below x.
inline double bessel_j_half_integer(double nu, double x) {
  const double c = std::sqrt(2.0 / (std::numbers::pi * x));
  double jm = c * std::cos(x);  // J_{-1/2}
  double j = c * std::sin(x);   // J_{1/2}
  if (nu < 0.0) return jm;
  for (double m = 0.5; m < nu - 0.25; m += 1.0) {
    const double next = 2.0 * m / x * j - jm;
    jm = j;
    j = next;
  }
  return j;
}

// Integer orders by Miller's backward recurrence normalized with
// J_0 + 2 sum_k J_{2k} = 1.
inline double bessel_j_integer_miller(int n, double x) {
  const int start = 2 * ((std::max(n, static_cast<int>(x)) + 30 + static_cast<int>(std::sqrt(40.0 * (x + n)))) / 2);
  double jp = 0.0, j = 1e-300, norm = 0.0, result = 0.0;
  for (int k = start; k > 0; --k) {
    const double jm = 2.0 * k / x * j - jp;
    jp = j;
    j = jm;
    if (std::abs(j) > 1e250) {
      j *= 1e-250;
      jp *= 1e-250;
      result *= 1e-250;
      norm *= 1e-250;
    }
    if (k - 1 == n) result = j;
    if ((k - 1) % 2 == 0 && k - 1 > 0) norm += 2.0 * j;
  }
  norm += j;  // J_0
  return result / norm;
}

}  // namespace detail

/// Bessel function of the first kind J_nu(x) for x >= 0 and nu >= -1/2.
inline double bessel_j(double nu, double x) {
  detail::require(std::isfinite(x) && x >= 0.0, "bessel_j: x must be finite and non-negative");
  detail::require(nu >= -0.5, "bessel_j: order must be >= -1/2");
  if (x == 0.0) {
    detail::require(nu >= 0.0, "bessel_j: J_{-1/2} is singular at 0");
    return nu == 0.0 ? 1.0 : 0.0;
  }
  if (detail::is_half_integer(nu) && x >= nu + 1.0) return detail::bessel_j_half_integer(nu, x);
  if (x > 12.0 && detail::is_integer(nu)) return detail::bessel_j_integer_miller(static_cast<int>(std::round(nu)), x);
  return std::pow(0.5 * x, nu) * detail::scaled_bessel_series(nu, x);
}

/// Stationary profile constants for dimension d.
struct SteadyState {
  int dim = 1;
  double R_inf = 0.0;
  double Z = 0.0;
  double alpha = 0.0;
  double lambda = 0.0;
  double omega_d = 0.0;

  double nu() const noexcept { return 0.5 * dim; }
};

/// V(x) = alpha x^{d/2} J_{d/2}(x) below R_inf, 1 above.
inline double eval_V(const SteadyState& s, double x) {
  detail::require(std::isfinite(x) && x >= 0.0, "eval_V: x must be finite and non-negative");
  if (x >= s.R_inf) return 1.0;
  const double nu = s.nu();
  const double v = s.alpha * std::pow(x, 2.0 * nu) * std::pow(2.0, -nu) * detail::scaled_bessel_series(nu, x);
  return std::clamp(v, 0.0, 1.0);
}

/// V'(x) = alpha x^{d/2} J_{d/2-1}(x) below R_inf, 0 above.
inline double eval_V_derivative(const SteadyState& s, double x) {
  detail::require(std::isfinite(x) && x >= 0.0, "eval_V_derivative: x must be finite and non-negative");
  if (x >= s.R_inf) return 0.0;
  const double nu = s.nu();
  return s.alpha * std::pow(x, 2.0 * nu - 1.0) * std::pow(2.0, 1.0 - nu) * detail::scaled_bessel_series(nu - 1.0, x);
}

/// Radial profile U(r) = V'(r) / (d omega_d r^{d-1}), with its limit at r = 0.
inline double eval_U(const SteadyState& s, double r) {
  detail::require(std::isfinite(r) && r >= 0.0, "eval_U: r must be finite and non-negative");
  if (r >= s.R_inf) return 0.0;
  const double nu = s.nu();
  return s.alpha * std::pow(2.0, 1.0 - nu) * detail::scaled_bessel_series(nu - 1.0, r) / (s.dim * s.omega_d);
}

inline SteadyState compute_steady(int dim) {
  detail::require(dim >= 1 && dim <= 10, "compute_steady: dim must lie in 1..10");
  using boost::math::tools::eps_tolerance;
  using boost::math::tools::toms748_solve;
  const double nu = 0.5 * dim;
  const double step = 0.1;
  const double scan_end = 40.0;

  double lo = step;
  while (bessel_j(nu, lo + step) > 0.0) {
    lo += step;
    if (lo > scan_end) throw BracketError("compute_steady: no zero of J_nu found by scanning", step, scan_end);
  }
  std::uintmax_t iters = 200;
  auto jz = [&](double x) { return bessel_j(nu, x); };
  auto zb = toms748_solve(jz, lo, lo + step, eps_tolerance<double>(50), iters);
  const double Z = 0.5 * (zb.first + zb.second);
  if (iters >= 200) throw BracketError("compute_steady: zero of J_nu did not converge", lo, lo + step);

  // (x^nu J_nu)' = x^nu J_{nu-1}; x J_{nu-1} = 2 nu J_nu - x J_{nu+1}.
  auto dj = [&](double x) { return 2.0 * nu * bessel_j(nu, x) - x * bessel_j(nu + 1.0, x); };
  const double a = 1e-3 * Z;
  if (!(dj(a) > 0.0 && dj(Z) < 0.0)) throw BracketError("compute_steady: maximum of x^nu J_nu not bracketed", a, Z);
  iters = 200;
  auto rb = toms748_solve(dj, a, Z, eps_tolerance<double>(50), iters);
  const double R = 0.5 * (rb.first + rb.second);
  if (iters >= 200) throw BracketError("compute_steady: maximum of x^nu J_nu did not converge", a, Z);

  SteadyState s;
  s.dim = dim;
  s.Z = Z;
  s.R_inf = R;
  s.alpha = 1.0 / (std::pow(R, nu) * bessel_j(nu, R));
  s.lambda = Z * Z / (R * R) - 1.0;
  s.omega_d = std::pow(std::numbers::pi, nu) / std::tgamma(nu + 1.0);
  return s;
}

}  // namespace beefbp
