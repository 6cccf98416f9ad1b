#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "roughvol/sde_mc.hpp"

using namespace roughvol;

namespace {

ModelParams model(double rho, VolSpec vol, double alpha = 0.8) {
  return {rho, 1.0, 1.0, PowerKernel{alpha}, std::move(vol)};
}

MCConfig config(std::size_t paths, std::size_t steps, std::uint64_t seed = 1) {
  return MCConfig{paths, Grid{1.0, steps}, seed};
}

}  // namespace

TEST(Price, ConstantVolIsMartingale) {
  const auto s = simulate_price_paths(model(-0.5, VolSpec::constant(0.2)), config(20000, 16));
  EXPECT_NEAR(s.mean_terminal.mean, 1.0, 3.0 * s.mean_terminal.std_error);
  for (std::size_t k = 0; k < 100; ++k) EXPECT_GE(s.running_max[k], std::max(1.0, s.terminal[k]) * (1 - 1e-15));
}

TEST(Price, ZeroEtaReducesToConstant) {
  const auto a = simulate_price_paths(model(0.3, VolSpec::exponential(0.0, ZetaCurve(0.25))), config(200, 10));
  const auto b = simulate_price_paths(model(0.3, VolSpec::constant(0.25)), config(200, 10));
  EXPECT_EQ(a.terminal, b.terminal);
}

TEST(Price, HorizonMismatchRejected) {
  auto m = model(0.0, VolSpec::constant(0.2));
  m.horizon = 2.0;
  EXPECT_THROW(simulate_price_paths(m, config(10, 10)), DomainError);
}

TEST(Conditional, ZeroCorrelationIsDeterministic) {
  const auto r = conditional_price_estimator(model(0.0, VolSpec::exponential(1.5)), config(500, 16));
  EXPECT_EQ(r.conditional.mean, 1.0);
  EXPECT_EQ(r.conditional.std_error, 0.0);
}

TEST(Conditional, ConstantVolUnbiased) {
  const auto r = conditional_price_estimator(model(-0.7, VolSpec::constant(0.3)), config(20000, 16));
  EXPECT_NEAR(r.conditional.mean, 1.0, 3.0 * r.conditional.std_error);
}

TEST(Conditional, ReducesVarianceOnRoughBergomi) {
  const auto r = conditional_price_estimator(model(-0.7, VolSpec::exponential(1.5, ZetaCurve(0.2))), config(20000, 50));
  EXPECT_NEAR(r.conditional.mean, 1.0, 3.0 * r.conditional.std_error);
  EXPECT_LT(r.conditional.std_error, r.plain.std_error);
}

TEST(Conditional, UnbiasedAcrossParameterSweep) {
  for (double rho : {-0.8, -0.3, 0.0, 0.5})
    for (double eta : {0.5, 1.0, 2.0}) {
      const auto r = conditional_price_estimator(model(rho, VolSpec::exponential(eta, ZetaCurve(0.2))),
                                                 config(4000, 24, 10 + static_cast<std::uint64_t>(eta * 10)));
      if (rho <= 0.0) {
        EXPECT_NEAR(r.conditional.mean, 1.0, 4.0 * r.conditional.std_error) << rho << " " << eta;
      } else {
        // positive correlation can leak mass: only E[S_T] <= S_0 is guaranteed
        EXPECT_LE(r.conditional.mean, 1.0 + 4.0 * r.conditional.std_error) << rho << " " << eta;
      }
    }
}

TEST(Conditional, ThreadCountInvariance) {
  auto mc = config(3000, 20, 9);
  const auto one = conditional_price_estimator(model(-0.4, VolSpec::exponential(1.0)), mc);
  mc.threads = 4;
  const auto four = conditional_price_estimator(model(-0.4, VolSpec::exponential(1.0)), mc);
  EXPECT_EQ(one.conditional.mean, four.conditional.mean);
  EXPECT_EQ(one.plain.std_error, four.plain.std_error);
}

TEST(Conditional, AntitheticPairsStillUnbiased) {
  auto mc = config(10000, 16, 3);
  mc.antithetic = true;
  const auto r = conditional_price_estimator(model(-0.5, VolSpec::exponential(1.0, ZetaCurve(0.3))), mc);
  EXPECT_NEAR(r.conditional.mean, 1.0, 4.0 * r.conditional.std_error);
  mc.n_paths = 9;
  EXPECT_THROW(conditional_price_estimator(model(-0.5, VolSpec::constant(0.2)), mc), DomainError);
}

TEST(Drifted, ZeroDriftGivesGaussianPath) {
  const auto m = model(0.0, VolSpec::exponential(2.0), 0.9);
  const auto mc = config(50, 40, 4);
  const auto paths = drifted_volterra_paths(m, DriftSpec{0.0, {}, {}, 0.0}, mc);
  const auto f = build_joint_factor(m.kernel, 0.0, mc.grid, Components::Y);
  for (std::size_t k = 0; k < 50; ++k) {
    const auto p = sample_path(f, mc.master_seed, k);
    EXPECT_EQ(paths[k].solution_path, p.y);
  }
}

TEST(Drifted, NegativeDriftDominatedByGaussianPath) {
  const auto m = model(-0.6, VolSpec::exponential(2.0), 0.9);
  const auto mc = config(300, 50, 6);
  const auto y = drifted_volterra_paths(m, DriftSpec{-0.6, {}, {}, 0.0}, mc);
  const auto y0 = drifted_volterra_paths(m, DriftSpec{0.0, {}, {}, 0.0}, mc);
  for (std::size_t k = 0; k < 300; ++k)
    for (std::size_t i = 0; i < y[k].solution_path.size(); ++i)
      EXPECT_LE(y[k].solution_path[i], y0[k].solution_path[i]);
}

TEST(Drifted, CappedDriftObeysAPrioriBound) {
  const double cap = 5.0;
  const auto m = model(0.6, VolSpec::exponential(2.0), 0.9);
  const auto mc = config(300, 50, 8);
  const auto y = drifted_volterra_paths(m, DriftSpec{1.0, cap, {}, 0.0}, mc);
  const auto y0 = drifted_volterra_paths(m, DriftSpec{0.0, {}, {}, 0.0}, mc);
  for (std::size_t k = 0; k < 300; ++k) {
    ASSERT_FALSE(y[k].exploded);
    for (std::size_t i = 0; i <= 50; ++i)
      EXPECT_LE(y[k].solution_path[i],
                y0[k].solution_path[i] + cap * std::pow(mc.grid.time(i), 0.9) * (1 + 1e-12) + 1e-14);
  }
}

TEST(Defect, LaddersMonotoneAndEdgeCases) {
  const std::vector<double> levels{1.0, 2.0, 3.0};
  const auto rep = martingale_defect(model(0.0, VolSpec::exponential(2.0), 0.9), levels, config(5000, 32, 2));
  ASSERT_EQ(rep.ladders.size(), 2u);
  EXPECT_EQ(rep.ladders[1].steps, 64u);
  for (const auto& l : rep.ladders) {
    for (std::size_t k = 1; k < levels.size(); ++k) EXPECT_LE(l.hit_probs[k].mean, l.hit_probs[k - 1].mean);
    EXPECT_LT(l.hit_probs.back().mean, 0.02);  // P(sup Y0 >= 3), Var Y0(1) ~ 1
    EXPECT_TRUE(l.hit_probs.back().wilson.has_value());
  }
  EXPECT_EQ(rep.defect_estimate, rep.ladders.back().hit_probs.back().mean);
  EXPECT_THROW(martingale_defect(model(0.0, VolSpec::constant(0.2)), {}, config(10, 10)), DomainError);
  const std::vector<double> bad{2.0, 1.0};
  EXPECT_THROW(martingale_defect(model(0.0, VolSpec::constant(0.2)), bad, config(10, 10)), DomainError);
}

TEST(Defect, SignOfCorrelationSeparatesRegimes) {
  const std::vector<double> levels{3.0, 5.0, 8.0};
  const auto neg = martingale_defect(model(-0.6, VolSpec::exponential(2.0), 0.9), levels, config(4000, 50, 3), 1);
  const auto pos = martingale_defect(model(0.6, VolSpec::exponential(2.0), 0.9), levels, config(4000, 50, 3), 1);
  EXPECT_LT(neg.ladders[0].hit_probs.back().wilson->hi, 5e-3);
  EXPECT_GT(pos.ladders[0].hit_probs.back().wilson->lo, 0.0);
  EXPECT_GT(pos.defect_estimate, 0.1);
}

TEST(Gamma, Examples) {
  EXPECT_NEAR(choose_gamma(0.0, 2.0), std::sqrt(2.0) / 2.0, 1e-15);
  EXPECT_NEAR(choose_gamma(-0.5, 2.0), (1.0 + std::sqrt(2.0)) / 2.0, 1e-15);
  EXPECT_THROW(choose_gamma(-0.8, 2.0), InfeasibleError);
  try {
    choose_gamma(-0.8, 2.0);
  } catch (const InfeasibleError& e) {
    EXPECT_NE(std::string(e.what()).find("rho^2 < (m-1)/m"), std::string::npos);
  }
  EXPECT_THROW(choose_gamma(-0.1, 1.0), DomainError);
  EXPECT_THROW(choose_gamma(0.2, 2.0), DomainError);
}

TEST(Gamma, FeasibleSetMatchesCriterion) {
  for (double rho = -1.0; rho <= 0.0; rho += 0.0125)
    for (double m : {1.1, 1.5, 2.0, 3.0, 10.0}) {
      const bool feasible = rho * rho < (m - 1.0) / m;
      if (feasible) {
        const double g = choose_gamma(rho, m);
        EXPECT_GT(rho * m + g, 0.0);
        EXPECT_GT(m * m - m - g * g, 0.0);
        EXPECT_NO_THROW(ControlConfig(rho, m, g, 10.0, 2.0));
      } else {
        EXPECT_THROW(choose_gamma(rho, m), InfeasibleError);
      }
    }
}

TEST(Control, InvariantsAtConstruction) {
  EXPECT_THROW(ControlConfig(-0.3, 2.0, 0.5, 10.0, 2.0), InfeasibleError);  // rho m + gamma = -0.1
  EXPECT_THROW(ControlConfig(-0.3, 2.0, 1.5, 10.0, 2.0), InfeasibleError);  // gamma^2 > m^2 - m
  EXPECT_THROW(ControlConfig(-0.3, 2.0, 1.0, 0.0, 2.0), DomainError);
  EXPECT_THROW(ControlConfig(-0.3, 2.0, 1.0, 10.0, 0.0), DomainError);
  const ControlConfig c(-0.3, 2.0, 1.0, 10.0, 2.0);
  EXPECT_DOUBLE_EQ(c.payoff_rate(), 0.5);
}

TEST(LowerBound, ConstantVolIsDeterministic) {
  const double s = 0.4, rho = -0.3, m = 2.0;
  const double g = choose_gamma(rho, m);
  const ControlConfig ctrl(rho, m, g, 10.0, 1e6);
  const auto r = boue_dupuis_lower_bound(model(rho, VolSpec::constant(s), 0.9), ctrl, config(200, 50));
  const double exact = 1.0 * (m * m - m - g * g) * s * s / 2.0;
  EXPECT_NEAR(r.mean, exact, 1e-12);
  EXPECT_LE(r.std_error, 1e-12);
}

TEST(LowerBound, PathwiseMonotoneInCap) {
  const auto mdl = model(-0.3, VolSpec::exponential(2.0), 0.9);
  const double g = choose_gamma(-0.3, 2.0);
  const auto mc = config(1000, 50, 12);
  std::vector<double> prev;
  for (double cap : {1.0, 2.0, 4.0, 8.0, 16.0}) {
    const auto p = boue_dupuis_payoffs(mdl, ControlConfig(-0.3, 2.0, g, cap, 3.0), mc);
    for (double v : p.payoff) EXPECT_GE(v, 0.0);
    if (!prev.empty()) {
      for (std::size_t k = 0; k < prev.size(); ++k) EXPECT_GE(p.payoff[k], prev[k]);
    }
    prev = p.payoff;
  }
}

TEST(LowerBound, BarrierHitPathsPayNothing) {
  const auto mdl = model(-0.3, VolSpec::exponential(1.0), 0.9);
  const double g = choose_gamma(-0.3, 2.0);
  const auto mc = config(400, 40, 2);
  const auto p = boue_dupuis_payoffs(mdl, ControlConfig(-0.3, 2.0, g, 10.0, 0.5), mc);
  const auto y0 = drifted_volterra_paths(mdl, DriftSpec{0.0, {}, {}, 0.0}, mc);
  for (std::size_t k = 0; k < 400; ++k) {
    double mx = 0.0;
    for (double v : y0[k].solution_path) mx = std::max(mx, v);
    if (mx >= 0.5) {
      EXPECT_EQ(p.payoff[k], 0.0);
    } else {
      EXPECT_GT(p.payoff[k], 0.0);
    }
  }
}

TEST(TruncatedMoment, ConstantVolBounds) {
  const std::vector<double> caps{0.5, 1.0, 2.0, 1e6};
  const auto r = truncated_moment(model(0.0, VolSpec::constant(0.2)), 1.0, caps, config(5000, 10));
  for (std::size_t k = 1; k < caps.size(); ++k) EXPECT_GE(r[k].mean, r[k - 1].mean);
  EXPECT_LE(r.back().mean, 1.0 + 3.0 * r.back().std_error);
  EXPECT_NEAR(r.back().mean, 1.0, 3.0 * r.back().std_error);
  const std::vector<double> tiny{1e-3};
  const auto t = truncated_moment(model(0.0, VolSpec::constant(0.2)), 2.0, tiny, config(500, 10));
  EXPECT_NEAR(t[0].mean, 1e-6, 1e-20);
  EXPECT_LE(t[0].std_error, 1e-20);
}
