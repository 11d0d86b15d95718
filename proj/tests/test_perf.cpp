#include <gtest/gtest.h>

#include <cmath>

#include "sqd/io.hpp"
#include "sqd/perf.hpp"

using sqd::ServiceDistribution;

TEST(Perf, ZAtZeroIsTailProbability) {
  for (const auto& dist : {ServiceDistribution::gamma(3.0), ServiceDistribution::pareto(1.5),
                           ServiceDistribution::weibull(0.5)}) {
    auto state = sqd::solve(0.5, 2, dist);
    for (int ell = 1; ell <= std::min(state.depth(), 6); ++ell) {
      EXPECT_NEAR(sqd::z(state, ell, 0.0), state.s(ell), 1e-10) << dist.spec() << " ell=" << ell;
    }
    EXPECT_EQ(sqd::z(state, state.depth() + 1, 0.0), 0.0);
  }
}

TEST(Perf, ZExponentialClosedForm) {
  // Memoryless service: Z_l(r) = s*_l e^{-r}.
  auto state = sqd::solve(0.5, 2, ServiceDistribution::exponential());
  for (double r : {0.0, 0.3, 2.0}) EXPECT_NEAR(sqd::z(state, 3, r), state.s(3) * std::exp(-r), 1e-13);
}

TEST(Perf, TableRecursionMatchesDirectZ) {
  auto state = sqd::solve(0.5, 2, ServiceDistribution::weibull(0.5));
  sqd::ZTable table(state, 4, 5.0, 0.01);
  ASSERT_EQ(table.grid().size(), 501u);
  for (std::size_t j : {0u, 1u, 137u, 250u, 500u}) {
    for (int ell = 1; ell <= 4; ++ell) {
      EXPECT_NEAR(table.at(ell, j), sqd::z(state, ell, table.grid()[j]), 1e-11) << "ell=" << ell << " j=" << j;
    }
  }
}

TEST(Perf, ZNonincreasingInAge) {
  auto state = sqd::solve(0.5, 2, ServiceDistribution::pareto(3.0));
  for (int ell = 1; ell <= 3; ++ell) {
    double prev = sqd::z(state, ell, 0.0);
    for (double r = 0.25; r < 10.0; r += 0.25) {
      const double v = sqd::z(state, ell, r);
      EXPECT_LE(v, prev + 1e-14);
      prev = v;
    }
  }
}

TEST(Perf, ExponentialWaitBothForms) {
  auto state = sqd::solve(0.5, 2, ServiceDistribution::exponential());
  EXPECT_NEAR(sqd::mean_virtual_wait(state), 0.2661, 5e-4);
  sqd::WaitConfig printed;
  printed.formula = sqd::WaitFormula::printed_sum;
  EXPECT_NEAR(sqd::mean_virtual_wait(state, printed), 0.4246, 5e-4);
}

TEST(Perf, WaitHeavierTailWaitsLonger) {
  double prev = 0.0;
  for (double alpha : {3.0, 2.5, 2.0, 1.75, 1.5}) {
    auto state = sqd::solve(0.5, 2, ServiceDistribution::pareto(alpha));
    const double w = sqd::mean_virtual_wait(state);
    EXPECT_GT(w, prev) << alpha;
    prev = w;
  }
}

TEST(Perf, WaitRejectsOtherD) {
  auto state = sqd::solve(0.5, 3, ServiceDistribution::exponential());
  EXPECT_THROW(sqd::mean_virtual_wait(state), sqd::UnsupportedMeasure);
  sqd::WaitConfig bad;
  bad.delta = 0.0;
  EXPECT_THROW(sqd::mean_virtual_wait(sqd::solve(0.5, 2, ServiceDistribution::exponential()), bad),
               sqd::ConfigError);
}

TEST(Perf, HDiagnostic) {
  auto state = sqd::solve(0.5, 2, ServiceDistribution::exponential());
  // s*_l = 2^{-(2^l - 1)}: H(l) = log2((2^l - 1) ln 2) / l.
  for (int ell = 2; ell <= 5; ++ell) {
    const double expect = std::log2((std::pow(2.0, ell) - 1.0) * std::log(2.0)) / ell;
    EXPECT_NEAR(*sqd::h_diagnostic(state, ell), expect, 1e-8);
  }
  EXPECT_FALSE(sqd::h_diagnostic(state, 6).has_value());
  EXPECT_FALSE(sqd::h_diagnostic(state, 0).has_value());
  auto d3 = sqd::solve(0.5, 3, ServiceDistribution::exponential());
  const double expect3 = std::log(std::log(1.0 / d3.s(2))) / std::log(3.0) / 2.0;
  EXPECT_NEAR(*sqd::h_diagnostic(d3, 2), expect3, 1e-14);
}

TEST(Perf, DecayExponentQuadraticRoot) {
  // beta = 2.5, d = 2: P(x) = 1 - x - x^2/2, positive root -1 + sqrt(3).
  auto e = sqd::decay_exponent(2.5, 2);
  EXPECT_EQ(e.j, 2);
  EXPECT_DOUBLE_EQ(e.eta, 0.5);
  EXPECT_NEAR(e.root, -1.0 + std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(e.gamma2, 1.0 / (-1.0 + std::sqrt(3.0)), 1e-14);
  EXPECT_NEAR(e.n_d, std::log2(1.0 / (-1.0 + std::sqrt(3.0))), 1e-14);
  EXPECT_LT(std::abs(sqd::decay_polynomial(e.root, 2, 0.5, 2)), 1e-12);
}

TEST(Perf, DecayExponentStableUnderPrecision) {
  for (double beta : {2.5, 3.3, 5.9}) {
    auto coarse = sqd::decay_exponent(beta, 2, 1e-12);
    auto fine = sqd::decay_exponent(beta, 2, 1e-16);
    EXPECT_LT(std::abs(coarse.n_d - fine.n_d), 1e-10);
  }
}

TEST(Perf, DecayExponentGrowsWithTail) {
  double prev = 0.0;
  for (double beta : {2.2, 2.7, 3.5, 4.5, 6.5}) {
    const double n = sqd::decay_exponent(beta, 2).n_d;
    EXPECT_GT(n, prev);
    EXPECT_LT(n, 1.0);
    prev = n;
  }
}

TEST(Perf, DecayExponentRefusals) {
  EXPECT_THROW(sqd::decay_exponent(3.0, 2), sqd::ConfigError);
  EXPECT_THROW(sqd::decay_exponent(1.9, 2), sqd::ConfigError);
  EXPECT_THROW(sqd::decay_exponent(1.4, 3), sqd::ConfigError);
  EXPECT_NO_THROW(sqd::decay_exponent(1.6, 3));
  EXPECT_NO_THROW(sqd::decay_exponent_for(2, 0.9, 2));
}

TEST(Perf, RecursionGrowthRate) {
  auto e = sqd::decay_exponent(2.5, 2);
  auto R = sqd::decay_recursion(1.0, 1.0, e.j, e.eta, 2, {10.0, 10.0}, 200);
  EXPECT_NEAR(std::log2(R[199] / R[198]), e.n_d, 1e-9);
}

TEST(Perf, RecursionAffineSolution) {
  const auto a = sqd::decay_affine_solution(1.0, 1.0, 2, 0.5, 2);
  EXPECT_DOUBLE_EQ(a.p, 4.0);
  EXPECT_DOUBLE_EQ(a.q, 2.0);
  auto R = sqd::decay_recursion(1.0, 1.0, 2, 0.5, 2, {a.p - a.q, a.p}, 10);
  for (int ell = 1; ell <= 10; ++ell) EXPECT_NEAR(R[ell - 1], a.p + a.q * ell, 1e-12);
  EXPECT_THROW(sqd::decay_recursion(1.0, 1.0, 2, 0.5, 2, {1.0}, 5), sqd::ConfigError);
}

TEST(Perf, TailCondition) {
  auto p = sqd::tail_condition(ServiceDistribution::pareto(1.5), 2);
  EXPECT_FALSE(p.satisfied);
  EXPECT_EQ(p.threshold, 2.0);
  EXPECT_TRUE(sqd::tail_condition(ServiceDistribution::pareto(1.6), 3).satisfied);
  EXPECT_TRUE(sqd::tail_condition(ServiceDistribution::exponential(), 2).satisfied);
  EXPECT_NEAR(sqd::tail_condition(ServiceDistribution::burr(2.0), 2).beta, 3.0, 1e-8);
}

TEST(Perf, WaitCsvRecord) {
  auto state = sqd::solve(0.5, 2, ServiceDistribution::exponential());
  sqd::WaitConfig cfg;
  const std::string csv = sqd::wait_csv(state, cfg, 0.25);
  EXPECT_EQ(csv, "lambda,d,dist,L0,R0,delta,formula,W*\n0.5,2,exp,6,20,0.003,difference,0.25\n");
}
