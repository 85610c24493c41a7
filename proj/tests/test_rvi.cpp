#include <cmath>

#include <gtest/gtest.h>

#include "harqest/mdp.hpp"
#include "mdp_oracle.hpp"

using namespace harqest;

TEST(Rvi, MatchesBruteForceOnRandomMdps) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const std::size_t n = 3 + seed % 10;
    const auto mdp = oracle::random_mdp(n, seed);
    mdp.validate();
    const auto bf = oracle::enumerate_policies(mdp);
    const auto rvi = solve_rvi(mdp);
    EXPECT_NEAR(rvi.average_cost, bf.best_cost, 1e-7) << "seed " << seed;
    EXPECT_NEAR(oracle::policy_cost(mdp, rvi.actions), bf.best_cost, 1e-7) << "seed " << seed;
    EXPECT_LE(rvi.report.lower, bf.best_cost + 1e-9);
    EXPECT_GE(rvi.report.upper, bf.best_cost - 1e-9);
  }
}

TEST(Rvi, EvaluatePolicyMatchesOracle) {
  const auto mdp = oracle::random_mdp(8, 77);
  std::vector<Action> actions(8, Action::new_transmission);
  EXPECT_NEAR(evaluate_policy(mdp, actions), oracle::policy_cost(mdp, actions), 1e-12);
}

TEST(Rvi, PeriodicChainNeedsAperiodicityTransform) {
  // Deterministic two-cycle: plain RVI oscillates, tau < 1 converges.
  FiniteMdp mdp(2);
  mdp.set(0, Action::new_transmission, 1.0, {{1, 1.0}});
  mdp.set(1, Action::new_transmission, 3.0, {{0, 1.0}});
  RviOptions plain;
  plain.tau = 1.0;
  plain.max_iters = 500;
  EXPECT_THROW(solve_rvi(mdp, plain), ConvergenceError);
  RviOptions damped;
  damped.tau = 0.5;
  const auto r = solve_rvi(mdp, damped);
  EXPECT_NEAR(r.average_cost, 2.0, 1e-9);
}

TEST(Rvi, TiesPreferNewTransmission) {
  FiniteMdp mdp(2);
  for (std::size_t s = 0; s < 2; ++s) {
    mdp.set(s, Action::new_transmission, 1.0, {{0, 0.5}, {1, 0.5}});
    mdp.set(s, Action::retransmit, 1.0, {{0, 0.5}, {1, 0.5}});
  }
  const auto r = solve_rvi(mdp);
  EXPECT_EQ(r.actions[0], Action::new_transmission);
  EXPECT_EQ(r.actions[1], Action::new_transmission);
}

TEST(Rvi, RejectsBadOptions) {
  const auto mdp = oracle::random_mdp(3, 1);
  RviOptions o;
  o.reference_state = 3;
  EXPECT_THROW(solve_rvi(mdp, o), UsageError);
  o.reference_state = 0;
  o.tau = 0.0;
  EXPECT_THROW(solve_rvi(mdp, o), UsageError);
  EXPECT_THROW(solve_rvi(FiniteMdp{}), UsageError);
}

TEST(FiniteMdp, MergesDuplicateTargetsAndValidates) {
  FiniteMdp mdp(2);
  mdp.set(0, Action::new_transmission, 0.0, {{1, 0.25}, {1, 0.25}, {0, 0.5}});
  ASSERT_EQ(mdp.row(0, Action::new_transmission).transitions.size(), 2u);
  EXPECT_EQ(mdp.row(0, Action::new_transmission).transitions[1].probability, 0.5);
  EXPECT_THROW(mdp.validate(), ModelError);  // state 1 has no action
  mdp.set(1, Action::retransmit, 0.0, {{0, 0.7}});
  EXPECT_THROW(mdp.validate(), ModelError);  // row sums to 0.7
  EXPECT_THROW(mdp.set(0, Action::retransmit, 0.0, {{5, 1.0}}), UsageError);
}

TEST(EvaluatePolicy, DetectsMultichain) {
  FiniteMdp mdp(2);
  mdp.set(0, Action::new_transmission, 0.0, {{0, 1.0}});
  mdp.set(1, Action::new_transmission, 1.0, {{1, 1.0}});
  const std::vector<Action> actions(2, Action::new_transmission);
  EXPECT_THROW(evaluate_policy(mdp, actions), ModelError);
}
