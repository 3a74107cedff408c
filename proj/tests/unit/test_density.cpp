#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "beefbp/density.hpp"

using namespace beefbp;

TEST(BoundaryPath, InterpolatesAndValidates) {
  const BoundaryPath p({0.0, 1.0, 2.0}, {1.0, 2.0, 2.0});
  EXPECT_DOUBLE_EQ(p.at(0.5), 1.5);
  EXPECT_DOUBLE_EQ(p.at(3.0), 2.0);
  EXPECT_THROW(BoundaryPath({0.0, 1.0}, {1.0, INFINITY}), DomainError);
  EXPECT_THROW(BoundaryPath({0.0, 0.0}, {1.0, 1.0}), DomainError);
}

TEST(RadialDensity, SteadyProfileInOneDimension) {
  const RadialGrid g(4.0, 4000);
  const auto s = compute_steady(1);
  GridFunction v(g, std::vector<double>(g.size()), 1.0);
  for (std::size_t i = 0; i < g.size(); ++i) v[i] = eval_V(s, g.node(i));
  const auto u = radial_density(v, s);
  const double h = g.spacing();
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double r = (i + 0.5) * h;
    if (r + h < s.R_inf) EXPECT_NEAR(u.values[i], 0.5 * std::cos(r), h * h);
    if (r > s.R_inf + h) EXPECT_EQ(u.values[i], 0.0);
  }
  EXPECT_NEAR(u.total_mass(), v[g.cells()], 1e-6);
}

TEST(RadialDensity, MassTelescopesAndZero) {
  const RadialGrid g(5.0, 500);
  for (int d : {2, 3}) {
    const auto s = compute_steady(d);
    GridFunction v(g, std::vector<double>(g.size()), 1.0);
    for (std::size_t i = 0; i < g.size(); ++i) v[i] = eval_V(s, g.node(i));
    EXPECT_NEAR(radial_density(v, d).total_mass(), 1.0, 1e-6);
    const double r = 1.0;
    const auto u = radial_density(v, d);
    EXPECT_NEAR(radial_value(u, r), eval_U(s, r), 2e-3);
  }
  const auto z = radial_density(GridFunction::constant(g, 0.0), 2);
  for (double x : z.values) EXPECT_EQ(x, 0.0);
  GridFunction bad = GridFunction::constant(g, 0.0);
  bad[3] = 0.5;
  EXPECT_THROW(radial_density(bad, 1), DomainError);
}

TEST(KilledBM, FreeHeatKernelFromOrigin) {
  const int d = 2;
  const double t = 0.5;
  KilledBMOptions opt;
  opt.n_paths = 40000;
  opt.dt = 5e-3;
  opt.seed = 3;
  opt.grid = DensityGridSpec{DensityLayout::box, 3.0, 12};
  const auto origin = [](Rng&, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
  const auto res = killed_bm_density(origin, d, BoundaryPath::constant(10.0, t), t, opt);
  const auto& est = res.estimate;
  int outliers = 0, tested = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (est.std_error[i] == 0.0) continue;
    // Cell average of e^t (4 pi t)^{-1} exp(-|y|^2 / 4t) by midpoint rule on a 4x4 sub-grid.
    const auto c = est.center(i);
    const double h = est.width();
    double avg = 0.0;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        const double x = c[0] + (a - 1.5) * h / 4, y = c[1] + (b - 1.5) * h / 4;
        avg += std::exp(t) / (4 * std::numbers::pi * t) * std::exp(-(x * x + y * y) / (4 * t)) / 16;
      }
    ++tested;
    if (std::abs(est.values[i] - avg) > 3 * est.std_error[i]) ++outliers;
  }
  EXPECT_LE(outliers, tested / 50 + 2);
  EXPECT_LE(std::exp(-t) * est.total_mass(), 1.0 + 3 * est.total_mass_stderr(std::exp(t)) / std::exp(t));
}

TEST(KilledBM, SupportInsideBoundaryAndShellStart) {
  KilledBMOptions opt;
  opt.n_paths = 5000;
  opt.dt = 1e-3;
  opt.grid = DensityGridSpec{DensityLayout::box, 2.0, 40};
  const auto res = killed_bm_density(InitialMeasure::sphere_shell(2, 1.0), BoundaryPath({0.0, 1.0}, {1.0, 1.5}), 0.5, opt);
  const auto& est = res.estimate;
  const double R = 1.25;
  for (std::size_t i = 0; i < est.size(); ++i)
    if (est.norm_range(i).first >= R) EXPECT_EQ(est.values[i], 0.0);
  EXPECT_GT(res.survivors, 0u);
  EXPECT_THROW(killed_bm_density(InitialMeasure::sphere_shell(2, 1.0), BoundaryPath::constant(1.0, 0.2), 0.5, opt),
               DomainError);
  EXPECT_THROW(killed_bm_density(InitialMeasure::constant_one(2), BoundaryPath::constant(1.0, 1.0), 0.5, opt),
               DomainError);
}

TEST(KilledBM, BridgeCorrectionReducesStepBias) {
  // Survival in a fixed interval [-1,1] from 0 at t = 0.3 (d = 1).
  const double t = 0.3;
  auto survival = [&](double dt, bool bridge) {
    KilledBMOptions opt;
    opt.n_paths = 40000;
    opt.dt = dt;
    opt.seed = 8;
    opt.bridge_correction = bridge;
    opt.grid = DensityGridSpec{DensityLayout::radial, 1.0, 10};
    const auto origin = [](Rng&, std::span<double> out) { out[0] = 0.0; };
    return static_cast<double>(killed_bm_density(origin, 1, BoundaryPath::constant(1.0, t), t, opt).survivors) /
           opt.n_paths;
  };
  const double with_a = survival(0.02, true), with_b = survival(0.01, true);
  const double raw_a = survival(0.02, false), raw_b = survival(0.01, false);
  EXPECT_LT(std::abs(with_a - with_b), std::abs(raw_a - raw_b));
}

TEST(Symmetrize, PreservesMassAndRadialInput) {
  DensityEstimate box;
  box.layout = DensityLayout::box;
  box.dim = 2;
  box.extent = 2.0;
  box.cells = 80;
  box.values.resize(box.cells * box.cells);
  box.std_error.assign(box.values.size(), 0.0);
  for (std::size_t i = 0; i < box.size(); ++i) {
    const auto c = box.center(i);
    box.values[i] = std::exp(-(c[0] * c[0] + c[1] * c[1]));
  }
  const auto rad = symmetrize(box, 0.1);
  EXPECT_NEAR(rad.total_mass(), box.total_mass(), 1e-12);
  for (std::size_t s = 2; s < 12; ++s) {
    const double r = (s + 0.5) * 0.1;
    EXPECT_NEAR(rad.values[s], std::exp(-r * r), 0.03);
  }
}

TEST(Symmetrize, PointCloudSpreadsOverShell) {
  // Short-time cloud from x0: after symmetrization its mass sits on the shell |x| = |x0|,
  // and the shell profile does not depend on the direction of x0.
  auto cloud = [](double a, double b) {
    const auto at = [a, b](Rng&, std::span<double> out) {
      out[0] = a;
      out[1] = b;
    };
    KilledBMOptions opt;
    opt.n_paths = 40000;
    opt.dt = 1e-4;
    opt.grid = DensityGridSpec{DensityLayout::box, 1.5, 60};
    return killed_bm_density(at, 2, BoundaryPath::constant(5.0, 1e-3), 1e-3, opt).estimate;
  };
  const auto e1 = cloud(0.6, 0.0);
  const auto r1 = symmetrize(e1, 0.1);
  EXPECT_NEAR(r1.total_mass(), e1.total_mass(), 1e-9);
  double inner = 0.0;
  for (std::size_t s = 0; s < r1.cells; ++s)
    if (r1.shell(s).first >= 0.4 - 1e-12 && r1.shell(s).second <= 0.8 + 1e-12) inner += r1.values[s] * r1.cell_volume(s);
  EXPECT_GT(inner / r1.total_mass(), 0.99);
  const auto r2 = symmetrize(cloud(0.6 / std::sqrt(2.0), 0.6 / std::sqrt(2.0)), 0.1);
  auto mean_radius = [](const DensityEstimate& r) {
    double m = 0.0, mr = 0.0;
    for (std::size_t s = 0; s < r.cells; ++s) {
      const double w = r.values[s] * r.cell_volume(s);
      m += w;
      mr += w * 0.5 * (r.shell(s).first + r.shell(s).second);
    }
    return mr / m;
  };
  EXPECT_NEAR(mean_radius(r1), 0.6, 0.02);
  EXPECT_NEAR(mean_radius(r2), 0.6, 0.02);
}
