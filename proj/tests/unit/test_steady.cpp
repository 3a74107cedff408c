#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <gtest/gtest.h>

#include "beefbp/steady.hpp"

using namespace beefbp;
constexpr double pi = std::numbers::pi;

TEST(BesselJ, Examples) {
  EXPECT_NEAR(bessel_j(0.5, pi / 2), 2.0 / pi, 1e-14);
  EXPECT_NEAR(bessel_j(1.5, pi), std::sqrt(2.0) / pi, 1e-14);
  EXPECT_NEAR(std::sqrt(2.0) / pi, 0.45016, 1e-5);
  for (double nu : {0.5, 1.0, 1.5, 3.0, 5.0}) EXPECT_EQ(bessel_j(nu, 0.0), 0.0);
  EXPECT_EQ(bessel_j(0.0, 0.0), 1.0);
}

TEST(BesselJ, MatchesBoostOnRange) {
  for (double nu : {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0})
    for (double x = 0.05; x <= 20.0; x += 0.173) {
      const double ref = boost::math::cyl_bessel_j(nu, x);
      const double got = bessel_j(nu, x);
      // Relative error away from zeros; absolute near them.
      EXPECT_NEAR(got, ref, 1e-10 * std::max(std::abs(ref), 1e-2)) << nu << " " << x;
    }
}

TEST(BesselJ, NegativeHalfOrder) {
  for (double x : {0.1, 1.0, 7.0}) EXPECT_NEAR(bessel_j(-0.5, x), std::sqrt(2 / (pi * x)) * std::cos(x), 1e-13);
  EXPECT_THROW(bessel_j(-0.5, 0.0), DomainError);
  EXPECT_THROW(bessel_j(1.0, -1.0), DomainError);
}

TEST(Steady, OneDimension) {
  const auto s = compute_steady(1);
  EXPECT_NEAR(s.R_inf, pi / 2, 1e-10);
  EXPECT_NEAR(s.Z, pi, 1e-10);
  EXPECT_NEAR(s.lambda, 3.0, 1e-9);
  EXPECT_NEAR(s.alpha, std::sqrt(pi / 2), 1e-10);
  EXPECT_NEAR(s.omega_d, 2.0, 1e-14);
  for (double x = 0.0; x <= pi / 2; x += 0.01) {
    EXPECT_NEAR(eval_V(s, x), std::sin(x), 1e-12);
    EXPECT_NEAR(eval_U(s, x), 0.5 * std::cos(x), 1e-12);
  }
  EXPECT_EQ(eval_V(s, 0.0), 0.0);
  EXPECT_EQ(eval_V(s, 2.0), 1.0);
  EXPECT_EQ(eval_U(s, s.R_inf), 0.0);
}

TEST(Steady, TwoAndThreeDimensions) {
  const auto s2 = compute_steady(2);
  // d/dx[x J_1(x)] = x J_0(x): R is the first zero of J_0, Z the first zero of J_1.
  EXPECT_NEAR(boost::math::cyl_bessel_j(0.0, s2.R_inf), 0.0, 1e-12);
  EXPECT_NEAR(s2.R_inf, boost::math::cyl_bessel_j_zero(0.0, 1), 1e-10);
  EXPECT_NEAR(s2.Z, boost::math::cyl_bessel_j_zero(1.0, 1), 1e-10);
  EXPECT_NEAR(s2.R_inf, 2.40483, 1e-5);
  EXPECT_NEAR(s2.Z, 3.83171, 1e-5);
  EXPECT_NEAR(s2.omega_d, pi, 1e-14);

  const auto s3 = compute_steady(3);
  EXPECT_NEAR(s3.R_inf, pi, 1e-10);
  EXPECT_NEAR(s3.Z, 4.4934, 1e-4);
  EXPECT_NEAR(s3.Z, boost::math::cyl_bessel_j_zero(1.5, 1), 1e-10);
  EXPECT_NEAR(s3.lambda, std::pow(s3.Z / pi, 2) - 1.0, 1e-12);
  EXPECT_NEAR(s3.omega_d, 4.0 * pi / 3.0, 1e-14);
}

TEST(Steady, InvariantsAllDimensions) {
  using boost::math::quadrature::gauss_kronrod;
  for (int d = 1; d <= 10; ++d) {
    const auto s = compute_steady(d);
    EXPECT_GT(s.R_inf, 0.0);
    EXPECT_LT(s.R_inf, s.Z);
    EXPECT_GT(s.lambda, 0.0);
    EXPECT_NEAR(s.alpha * std::pow(s.R_inf, 0.5 * d) * boost::math::cyl_bessel_j(0.5 * d, s.R_inf), 1.0, 1e-10);
    EXPECT_NEAR(boost::math::cyl_bessel_j(0.5 * d, s.Z), 0.0, 1e-12);
    EXPECT_NEAR(eval_V_derivative(s, s.R_inf * (1 - 1e-12)), 0.0, 1e-9);
    double prev = 0.0;
    for (double x = 0.0; x < s.R_inf; x += s.R_inf / 200) {
      const double v = eval_V(s, x);
      EXPECT_GE(v, prev);
      prev = v;
    }
    const double mass = gauss_kronrod<double, 61>::integrate(
        [&](double r) { return d * s.omega_d * eval_U(s, r) * std::pow(r, d - 1); }, 0.0, s.R_inf, 10, 1e-14);
    EXPECT_NEAR(mass, 1.0, 1e-8) << d;
  }
}

TEST(Steady, SecondDifferenceAtContact) {
  for (int d : {1, 2, 3}) {
    const auto s = compute_steady(d);
    double prev_err = 1.0;
    for (double h : {1e-1, 1e-2, 1e-3}) {
      const double x = s.R_inf - h;
      const double d2 = (eval_V(s, x + h) - 2 * eval_V(s, x) + eval_V(s, x - h)) / (h * h);
      EXPECT_LT(std::abs(d2 + 1.0), prev_err);
      prev_err = std::abs(d2 + 1.0);
    }
    EXPECT_LT(prev_err, 1e-2);
  }
}

TEST(Steady, UIsEigenfunction) {
  for (int d : {1, 2, 3, 5}) {
    const auto s = compute_steady(d);
    const double h = 1e-3;
    double worst = 0.0;
    for (double r = 0.1; r <= s.R_inf - 0.1; r += 0.01) {
      const double up = eval_U(s, r + h), u0 = eval_U(s, r), um = eval_U(s, r - h);
      const double lap = (up - 2 * u0 + um) / (h * h) + (d - 1) / r * (up - um) / (2 * h);
      worst = std::max(worst, std::abs(lap + u0));
    }
    EXPECT_LT(worst, 1e-4) << d;
  }
}

TEST(Steady, RejectsBadDimension) {
  EXPECT_THROW(compute_steady(0), DomainError);
  EXPECT_THROW(compute_steady(11), DomainError);
}
