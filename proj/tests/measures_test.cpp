#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tangle/measures.hpp"

namespace tangle {
namespace {

StationaryResult point_mass(int M, int level, int phase) {
  StationaryResult st;
  st.truncation = level;
  st.pi.assign(level + 1, RowVector::Zero(M));
  st.pi[level](phase - 1) = 1.0;
  return st;
}

TEST(Weights, ThroughputWeightsArePairCounts) {
  const Vector f = throughput_weights(6);
  for (int m = 1; m <= 6; ++m) EXPECT_DOUBLE_EQ(f(m - 1), oracle::c2(m));
  EXPECT_EQ(boundary_weights(4), Vector::LinSpaced(4, 1, 4));
}

TEST(Measures, SingleStateDistributions) {
  const ModelParams p{2.0, 1.5, 0.5, 4};
  const Measures a = compute_measures(point_mass(4, 0, 1), p);
  EXPECT_EQ(a.e_na, 0.0);
  EXPECT_EQ(a.e_nb, 1.0);
  EXPECT_EQ(a.th, 0.0);

  const Measures b = compute_measures(point_mass(4, 3, 4), p);
  EXPECT_EQ(b.e_na, 3.0);
  EXPECT_EQ(b.e_nb, 4.0);
  // 2 mu k C_4^2 = 2 * 1.5 * 3 * 6
  EXPECT_DOUBLE_EQ(b.th, 54.0);
}

TEST(Measures, ThroughputEqualsArrivalRate) {
  for (const ModelParams p : {ModelParams{2.0, 1.0, 0.5, 5}, ModelParams{30.0, 3.5, 0.45, 50},
                              ModelParams{20.0, 5.0, 0.3, 10}, ModelParams{0.5, 0.2, 2.0, 3}}) {
    const StationaryResult st = stationary(p);
    const ConservationReport r = conservation_report(st, p);
    EXPECT_LE(r.relative_gap, 1e-8) << p.lambda << ' ' << p.mu;
    // each connection turns one internal tip into a boundary tip and removes
    // two; in steady state impatience must replace the difference
    EXPECT_LE(r.rate_gap, 1e-7);
  }
}

TEST(Measures, AgreeWithDirectSolve) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 6; ++trial) {
    const ModelParams p = oracle::random_params(rng, 8);
    const Measures a = compute_measures(stationary(p), p);
    const Measures b = compute_measures(direct_solve_oracle(p, 400), p);
    EXPECT_NEAR(a.e_na / b.e_na, 1.0, 1e-8);
    EXPECT_NEAR(a.e_nb / b.e_nb, 1.0, 1e-8);
    EXPECT_NEAR(a.th / b.th, 1.0, 1e-8);
  }
}

TEST(Measures, BoundaryCountWithinCapacity) {
  const ModelParams p{30.0, 3.5, 0.45, 100};
  const Measures m = compute_measures(stationary(p), p);
  EXPECT_GE(m.e_nb, 1.0);
  EXPECT_LE(m.e_nb, 100.0);
  EXPECT_GT(m.e_na, 0.0);
}

TEST(Measures, ImpatienceBalancePinsInternalMean) {
  // alpha * E[k; m < M] = lambda / 2, so E[N_A] = lambda / (2 alpha) + E[k; m = M]
  for (const ModelParams p : {ModelParams{2.0, 1.0, 0.5, 3}, ModelParams{30.0, 4.0, 0.45, 30},
                              ModelParams{1.0, 0.3, 2.0, 4}}) {
    const StationaryResult st = stationary(p);
    double full = 0.0;
    for (std::size_t k = 1; k < st.pi.size(); ++k) full += static_cast<double>(k) * st.pi[k](p.capacity - 1);
    const Measures m = compute_measures(st, p);
    EXPECT_NEAR(m.e_na, p.lambda / (2.0 * p.alpha) + full, 1e-9 * m.e_na);
  }
}

TEST(Measures, BoundaryMeanFallsWithMu) {
  double prev = 1e300;
  for (double mu : {3.5, 4.0, 5.0}) {
    const ModelParams p{30.0, mu, 0.45, 30};
    const Measures m = compute_measures(stationary(p), p);
    EXPECT_LT(m.e_nb, prev);
    prev = m.e_nb;
  }
}

TEST(Measures, LittleGapAbsentWithoutSojourn) {
  const ModelParams p{2.0, 1.0, 0.5, 5};
  const ConservationReport r = conservation_report(stationary(p), p);
  EXPECT_FALSE(r.little_gap.has_value());
  const ConservationReport r2 = conservation_report(stationary(p), p, r.little_rhs / p.lambda);
  ASSERT_TRUE(r2.little_gap.has_value());
  EXPECT_NEAR(*r2.little_gap, 0.0, 1e-15);
}

}  // namespace
}  // namespace tangle
