#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "roughvol/model_core.hpp"

using namespace roughvol;

TEST(Kernel, PointValues) {
  EXPECT_DOUBLE_EQ(eval_kernel(PowerKernel{1.0}, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(eval_kernel(PowerKernel{1.5}, 4.0), 3.0);
  const double v = eval_kernel(PowerKernel{0.8}, 0.01);
  EXPECT_NEAR(v, 0.8 * std::exp(-0.2 * std::log(0.01)), 1e-14);
  EXPECT_NEAR(v, 2.009509, 1e-6);
}

TEST(Kernel, RejectsNonPositiveLag) {
  EXPECT_THROW(eval_kernel(PowerKernel{0.8}, 0.0), DomainError);
  EXPECT_THROW(eval_kernel(PowerKernel{0.8}, -1.0), DomainError);
}

TEST(Kernel, SquareIntegrabilityEnforced) {
  EXPECT_THROW(variance_Y(PowerKernel{0.5}, 1.0), InfeasibleError);
  EXPECT_THROW(variance_Y(PowerKernel{0.3}, 1.0), InfeasibleError);
  EXPECT_NO_THROW(variance_Y(PowerKernel{0.51}, 1.0));
  EXPECT_DOUBLE_EQ(PowerKernel::from_hurst(0.3).alpha, 0.8);
}

TEST(Kernel, ProductWeightsTelescope) {
  for (double a : {0.6, 0.8, 1.0, 1.3}) {
    const auto w = product_weights(a, 0.01, 100);
    double s = 0.0;
    for (std::size_t k = 0; k < 100; ++k) {
      s += w[k];
      EXPECT_NEAR(s, std::pow(0.01 * (k + 1), a), 1e-13) << a << " " << k;
    }
  }
}

TEST(Sigma, FamilyValues) {
  EXPECT_DOUBLE_EQ(eval_sigma(VolSpec::exponential(1.0), 0.0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(eval_sigma(VolSpec::constant(0.2), 3.0, -7.0), 0.2);
  EXPECT_DOUBLE_EQ(eval_sigma(VolSpec::power(1.0, 2.0), 0.0, 3.0), 9.0);
  EXPECT_DOUBLE_EQ(eval_sigma(VolSpec::power(1.0, 2.0), 0.0, -3.0), 0.0);
  EXPECT_DOUBLE_EQ(eval_sigma(VolSpec::power(1.0, 2.0, PowerExtension::Even), 0.0, -3.0), 9.0);
  // eta = 0 collapses to the zeta curve
  ZetaCurve z({0.0, 1.0}, {0.1, 0.3});
  EXPECT_NEAR(eval_sigma(VolSpec::exponential(0.0, z), 0.5, 12.0), 0.2, 1e-15);
}

TEST(Sigma, SaturatesInsteadOfOverflowing) {
  const auto v = VolSpec::exponential(2.0);
  EXPECT_EQ(eval_sigma(v, 0.0, 1e6), kSigmaCeiling);
  EXPECT_EQ(eval_sigma_squared(v, 0.0, 1e6), kSigmaCeiling);
  EXPECT_TRUE(std::isfinite(eval_sigma(VolSpec::power(3.0, 5.0), 0.0, 1e200)));
  EXPECT_EQ(eval_sigma(v, 0.0, -1e6), 0.0);
}

TEST(Sigma, NonnegativeAndMonotoneOnSampledGrid) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> yd(-20.0, 20.0), td(0.0, 2.0);
  const std::vector<VolSpec> fams{VolSpec::exponential(1.5, ZetaCurve({0.0, 1.0, 2.0}, {0.2, 0.5, 0.1})),
                                  VolSpec::power(2.0, 1.5), VolSpec::constant(0.3)};
  for (const auto& v : fams) {
    for (int k = 0; k < 500; ++k) {
      const double t = td(gen), y1 = yd(gen), y2 = yd(gen);
      const double lo = std::min(y1, y2), hi = std::max(y1, y2);
      EXPECT_GE(eval_sigma(v, t, lo), 0.0);
      EXPECT_LE(eval_sigma(v, t, lo), eval_sigma(v, t, hi));
    }
  }
}

TEST(Sigma, LocallyLipschitzOnCompacts) {
  const auto v = VolSpec::exponential(1.5);
  const double lip = 1.5 * std::exp(1.5 * 2.0);  // sup |d sigma / dy| on [-2, 2]
  for (double y = -2.0; y < 2.0; y += 0.01) {
    const double d = std::abs(eval_sigma(v, 0.0, y + 0.01) - eval_sigma(v, 0.0, y));
    EXPECT_LE(d, lip * 0.01 * (1 + 1e-12));
  }
}

TEST(Sigma, InvalidParametersRejected) {
  EXPECT_THROW(VolSpec::exponential(-1.0), DomainError);
  EXPECT_THROW(VolSpec::power(0.0, 2.0), DomainError);
  EXPECT_THROW(VolSpec::power(1.0, 0.5), DomainError);
  EXPECT_THROW(VolSpec::constant(-0.1), DomainError);
  EXPECT_THROW(ZetaCurve({0.0, 1.0}, {0.2, -0.1}), DataError);
  EXPECT_THROW(ZetaCurve({1.0, 0.0}, {0.2, 0.1}), DataError);
}

TEST(ZetaCurve, ConstantExtrapolationAndMinimum) {
  ZetaCurve z({0.5, 1.0, 2.0}, {0.4, 0.1, 0.3});
  EXPECT_DOUBLE_EQ(z(0.0), 0.4);
  EXPECT_DOUBLE_EQ(z(5.0), 0.3);
  EXPECT_DOUBLE_EQ(z(0.75), 0.25);
  EXPECT_DOUBLE_EQ(z.min_on(0.75), 0.25);
  EXPECT_DOUBLE_EQ(z.min_on(3.0), 0.1);
}

TEST(ModelParams, RhoBarDerived) {
  ModelParams m{-0.6, 1.0, 1.0, PowerKernel{0.8}, VolSpec::constant(0.2)};
  EXPECT_DOUBLE_EQ(m.rho_bar(), 0.8);
  m.rho = 1.2;
  EXPECT_THROW(m.validate(), DomainError);
}

TEST(Covariance, VarianceClosedFormMatchesRawQuadrature) {
  for (double a : {0.6, 0.75, 0.9, 1.0, 1.25, 1.5})
    for (double t : {0.1, 1.0, 5.0}) {
      const double closed = variance_Y(PowerKernel{a}, t);
      const double raw = oracle::raw_variance(a, t);
      EXPECT_LE(std::abs(closed - raw), 1e-10 * closed) << a << " " << t;
    }
  EXPECT_DOUBLE_EQ(variance_Y(PowerKernel{1.0}, 2.0), 2.0);
  EXPECT_NEAR(variance_Y(PowerKernel{0.9}, 1.0), 1.0125, 1e-15);
  EXPECT_NEAR(variance_Y(PowerKernel{1.5}, 1.0), 1.125, 1e-15);
}

TEST(Covariance, OffDiagonalMatchesIndependentRule) {
  // alpha = 1.5, t = 2, u = 1: 2.25 int_0^1 sqrt(2 - s) sqrt(1 - s) ds
  const double c = covariance_YY(PowerKernel{1.5}, 2.0, 1.0);
  boost::math::quadrature::tanh_sinh<double> ts;
  const double ref = 2.25 * ts.integrate([](double s) { return std::sqrt((2.0 - s) * (1.0 - s)); }, 0.0, 1.0);
  EXPECT_LE(std::abs(c - ref), 1e-9 * ref);
  for (double a : {0.55, 0.7, 0.8, 1.2})
    for (auto [t, u] : {std::pair{1.0, 0.3}, {0.05, 0.04}, {2.0, 0.01}, {1.0, 0.995}}) {
      const double lib = covariance_YY(PowerKernel{a}, t, u);
      const double raw = oracle::raw_covariance(a, t, u);
      EXPECT_LE(std::abs(lib - raw), 1e-9 * std::abs(raw)) << a << " " << t << " " << u;
    }
}

TEST(Covariance, SymmetryAndCauchySchwarz) {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> td(0.0, 3.0), ad(0.55, 1.45);
  for (int k = 0; k < 200; ++k) {
    const PowerKernel K{ad(gen)};
    const double t = td(gen), u = td(gen);
    const double c = covariance_YY(K, t, u);
    EXPECT_EQ(c, covariance_YY(K, u, t));
    EXPECT_LE(c * c, variance_Y(K, t) * variance_Y(K, u) * (1 + 1e-12));
  }
  EXPECT_EQ(covariance_YY(PowerKernel{0.8}, 0.7, 0.7), variance_Y(PowerKernel{0.8}, 0.7));
}

TEST(Covariance, BrownianDegeneration) {
  const PowerKernel K{1.0};
  for (double t : {0.1, 0.5, 1.0, 3.0})
    for (double u : {0.2, 1.0, 2.5}) {
      EXPECT_NEAR(covariance_YY(K, t, u), std::min(t, u), 1e-12);
      EXPECT_NEAR(cross_cov_YW(K, 1.0, t, u), std::min(t, u), 1e-12);
    }
  const std::vector<double> mesh{0.01, 0.04, 0.25};
  const auto th = continuity_modulus(K, 1.0, mesh);
  for (std::size_t k = 0; k < mesh.size(); ++k) EXPECT_NEAR(th[k], std::sqrt(mesh[k]), 1e-12);
}

TEST(Covariance, CrossCovariance) {
  EXPECT_DOUBLE_EQ(cross_cov_YW(PowerKernel{1.0}, 1.0, 1.0, 3.0), 1.0);
  EXPECT_EQ(cross_cov_YW(PowerKernel{0.8}, 0.0, 1.0, 0.5), 0.0);
  const double c = cross_cov_YW(PowerKernel{0.8}, -0.5, 1.0, 0.5);
  EXPECT_NEAR(c, -0.5 * oracle::raw_kernel_mass(0.8, 1.0, 0.5), 1e-12);
  EXPECT_NEAR(c, -0.212825, 1e-6);
}

TEST(Continuity, MonotoneAndResolutionStable) {
  const PowerKernel K{0.9};
  const std::vector<double> mesh{0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0};
  const auto th = continuity_modulus(K, 1.0, mesh);
  for (std::size_t k = 1; k < th.size(); ++k) EXPECT_GE(th[k], th[k - 1]);
  const std::vector<double> one{0.01};
  const double coarse = continuity_modulus(K, 1.0, one, 200)[0];
  const double fine = continuity_modulus(K, 1.0, one, 400)[0];
  EXPECT_GT(coarse, 0.0);
  EXPECT_NEAR(coarse, fine, 0.005 * fine);  // two significant digits
  EXPECT_THROW(continuity_modulus(K, 1.0, {}), DomainError);
}

TEST(Dudley, SqrtThetaMatchesAnalyticValue) {
  // int_0^1 sqrt(ln 1/u) d sqrt(u) = sqrt(pi/2)
  std::vector<std::pair<double, double>> s;
  for (int k = -60; k <= 0; ++k) {
    const double h = std::pow(10.0, k / 10.0);
    s.emplace_back(h, std::sqrt(h));
  }
  const auto d = dudley_diagnostic(s);
  EXPECT_TRUE(d.converged);
  EXPECT_NEAR(d.tail_exponent, 0.5, 1e-12);
  EXPECT_NEAR(d.integral_estimate, std::sqrt(std::numbers::pi / 2.0), 2e-3);
}

TEST(Dudley, DegenerateInputs) {
  std::vector<std::pair<double, double>> flat{{0.1, 0.3}, {0.5, 0.3}, {1.0, 0.3}};
  EXPECT_EQ(dudley_diagnostic(flat).integral_estimate, 0.0);
  std::vector<std::pair<double, double>> single{{0.1, 0.3}};
  EXPECT_THROW(dudley_diagnostic(single), DataError);
  std::vector<std::pair<double, double>> down{{0.1, 0.3}, {0.5, 0.2}};
  EXPECT_THROW(dudley_diagnostic(down), DataError);
}

TEST(Dudley, ModulusOfRoughKernelConverges) {
  const PowerKernel K{0.8};
  std::vector<double> mesh;
  for (int k = 0; k < 8; ++k) mesh.push_back(0.005 * std::pow(2.0, k));
  const auto th = continuity_modulus(K, 1.0, mesh);
  std::vector<std::pair<double, double>> s;
  for (std::size_t k = 0; k < mesh.size(); ++k) s.emplace_back(mesh[k], th[k]);
  const auto d = dudley_diagnostic(s);
  EXPECT_TRUE(d.converged);
  EXPECT_TRUE(std::isfinite(d.integral_estimate));
  EXPECT_NEAR(d.tail_exponent, 0.3, 0.05);  // theta(h) ~ h^(alpha - 1/2)
}

TEST(Osgood, ClosedFormCases) {
  const auto pw = osgood_check(VolSpec::power(1.0, 2.0), 1.0, 1.0, 1.0);
  EXPECT_TRUE(pw.finite);
  EXPECT_NEAR(pw.value, 1.0, 1e-10);
  // p = 3, alpha = 0.75, A = 2: int_2^inf w^(-8/3) dw / w = (3/8) 2^(-8/3)
  const auto p3 = osgood_check(VolSpec::power(1.0, 3.0), 0.75, 2.0, 1.0);
  EXPECT_NEAR(p3.value, 0.375 * std::pow(2.0, -8.0 / 3.0), 1e-10);
  EXPECT_FALSE(osgood_check(VolSpec::power(1.0, 1.0), 1.0, 1.0, 1.0).finite);
  EXPECT_FALSE(osgood_check(VolSpec::constant(0.5), 1.0, 1.0, 1.0).finite);
}

TEST(Osgood, ExponentialFamilyFinite) {
  const auto r = osgood_check(VolSpec::exponential(1.0), 0.9, 1.0, 1.0);
  EXPECT_TRUE(r.finite);
  // int_1^inf (w e^-w)^(1/0.9) dw / w, by an independent rule
  boost::math::quadrature::tanh_sinh<double> ts;
  const double ref = ts.integrate(
      [](double w) { return std::pow(w * std::exp(-w), 1.0 / 0.9) / w; }, 1.0,
      std::numeric_limits<double>::infinity());
  EXPECT_NEAR(r.value, ref, 1e-9 * ref);
  EXPECT_FALSE(osgood_check(VolSpec::exponential(0.0), 0.9, 1.0, 1.0).finite);
}

TEST(Osgood, ScaleConsistency) {
  for (double a : {0.75, 1.0, 1.25})
    for (double c : {0.3, 2.0, 17.0}) {
      const auto base = osgood_check(VolSpec::exponential(1.5), a, 0.5, 1.0);
      const auto scaled = osgood_check(VolSpec::exponential(1.5), a, 0.5, 1.0, c);
      EXPECT_NEAR(scaled.value, base.value / std::pow(c, 1.0 / a), 1e-9 * base.value);
      const auto pb = osgood_check(VolSpec::power(1.0, 2.5), a, 0.5, 1.0);
      const auto ps = osgood_check(VolSpec::power(1.0, 2.5), a, 0.5, 1.0, c);
      EXPECT_NEAR(ps.value, pb.value / std::pow(c, 1.0 / a), 1e-9 * pb.value);
    }
}

TEST(Osgood, UsesTimeInfimumOfZeta) {
  ZetaCurve z({0.0, 1.0, 2.0}, {1.0, 0.25, 1.0});
  const auto on_short = osgood_check(VolSpec::exponential(1.0, z), 1.0, 1.0, 0.5);
  const auto on_long = osgood_check(VolSpec::exponential(1.0, z), 1.0, 1.0, 2.0);
  const auto flat = osgood_check(VolSpec::exponential(1.0, ZetaCurve(0.25)), 1.0, 1.0, 1.0);
  EXPECT_NEAR(on_long.value, flat.value, 1e-12 * flat.value);
  EXPECT_LT(on_short.value, on_long.value);
}
