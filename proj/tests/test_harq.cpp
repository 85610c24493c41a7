#include <cmath>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "harqest/harq_model.hpp"

using namespace harqest;

namespace {

// Reference values evaluated in 50-digit arithmetic at SNR 10 dB, L=100, R=4.
constexpr double kCcGain2 = 7.2761703563568186e-4;
constexpr double kCcGain1 = 0.99951671790248388;
constexpr double kIrGains11 = 1.7347352343754125e-49;
constexpr double kCcGains22 = 2.717666847519159e-23;
constexpr double kCcGains12 = 7.302706005988984e-13;
constexpr double kIrGains12 = 2.4813562883923036e-83;
constexpr double kIrGains111 = 6.6504595217881188e-149;
constexpr double kStaticWorst = 6.16714654819e-8;  // max_r g(r), at r = 20

void expect_rel(double actual, double expected, double rel) {
  EXPECT_NEAR(actual, expected, rel * std::abs(expected)) << "expected " << expected;
}

double cc(std::vector<double> g) { return block_error_prob(fixtures::reference_harq(), g); }
double ir(std::vector<double> g) {
  return block_error_prob(fixtures::reference_harq(HarqScheme::incremental_redundancy), g);
}

}  // namespace

TEST(BlockError, ReferenceValues) {
  expect_rel(cc({2.0}), kCcGain2, 1e-9);
  expect_rel(cc({1.0}), kCcGain1, 1e-12);
  expect_rel(cc({1.0, 1.0}), kCcGain2, 1e-9);  // CC combines to the same SNR as h=2
  expect_rel(cc({2.0, 2.0}), kCcGains22, 1e-8);
  expect_rel(cc({1.0, 2.0}), kCcGains12, 1e-8);
  expect_rel(ir({1.0, 1.0}), kIrGains11, 1e-8);
  expect_rel(ir({1.0, 2.0}), kIrGains12, 1e-8);
  expect_rel(ir({1.0, 1.0, 1.0}), kIrGains111, 1e-8);
}

TEST(BlockError, SingleAttemptSchemesAgree) {
  for (double h : {0.5, 1.0, 2.0, 3.0}) EXPECT_DOUBLE_EQ(cc({h}), ir({h}));
}

TEST(BlockError, IrNeverWorseThanCc) {
  const std::vector<std::vector<double>> sets = {{1, 1}, {1, 2}, {2, 2}, {1, 1, 1}, {0.5, 1, 2}, {0.3, 0.3}};
  for (const auto& s : sets) EXPECT_LE(ir(s), cc(s));
}

TEST(BlockError, ExtremeSnr) {
  EXPECT_EQ(block_error_prob(HarqModel::from_db(HarqScheme::chase_combining, 60.0, 100, 4.0), std::vector{2.0}), 0.0);
  EXPECT_NEAR(block_error_prob(HarqModel::from_db(HarqScheme::chase_combining, -20.0, 100, 4.0), std::vector{1.0}), 1.0,
              1e-12);
}

TEST(BlockError, RejectsBadInput) {
  EXPECT_THROW(cc({}), UsageError);
  EXPECT_THROW(cc({0.0}), UsageError);
  EXPECT_THROW(HarqModel::from_db(HarqScheme::chase_combining, 10.0, 0, 4.0), ConfigError);
}

TEST(ConditionalError, NewTransmissionAndRatios) {
  const auto m = fixtures::reference_harq();
  const std::vector<double> gains{2.0, 1.0};
  expect_rel(conditional_error_prob(m, gains, HistoryCounter(2), 0), kCcGain2, 1e-9);
  expect_rel(conditional_error_prob(m, gains, HistoryCounter(2), 1), kCcGain1, 1e-12);
  expect_rel(conditional_error_prob(m, gains, HistoryCounter(std::vector{0, 1}), 1), 7.2796884994841133e-4, 1e-9);
  expect_rel(conditional_error_prob(m, gains, HistoryCounter(std::vector{1, 0}), 0), 3.73502366549853e-20, 1e-8);
}

TEST(ConditionalError, ChainRuleRecoversJointProbability) {
  // P(fail after attempts 1..l) = product of the conditional errors.
  for (auto scheme : {HarqScheme::chase_combining, HarqScheme::incremental_redundancy}) {
    const auto m = fixtures::reference_harq(scheme, 5.0);
    const std::vector<double> gains{1.0, 0.6};
    const std::vector<std::size_t> seq{1, 0, 1, 1};
    HistoryCounter h(2);
    double product = 1.0;
    std::vector<double> drawn;
    for (auto i : seq) {
      product *= conditional_error_prob(m, gains, h, i);
      h = h.incremented(i);
      drawn.push_back(gains[i]);
      expect_rel(product, block_error_prob(m, drawn), 1e-9);
    }
  }
}

TEST(ConditionalError, VanishingHistoryGivesZero) {
  const auto m = HarqModel::from_db(HarqScheme::chase_combining, 40.0, 100, 4.0);
  const std::vector<double> gains{2.0};
  EXPECT_EQ(conditional_error_prob(m, gains, HistoryCounter(std::vector{5}), 0), 0.0);
}

TEST(StaticErrorProfile, AttemptsMatchConditionalDefinition) {
  const auto m = fixtures::reference_harq();
  const auto profile = ErrorProfile::from_model(m, 2.0, 5);
  expect_rel(profile(1), kCcGain2, 1e-9);
  expect_rel(profile(2), kCcGains22 / kCcGain2, 1e-8);
  for (std::size_t r = 2; r <= 5; ++r) {
    std::vector<double> prev(r - 1, 2.0), cur(r, 2.0);
    expect_rel(profile(r), block_error_prob(m, cur) / block_error_prob(m, prev), 1e-12);
  }
}

TEST(WorstCaseStatic, MaximumOverAttempts) {
  const auto m = fixtures::reference_harq();
  const auto w = worst_retransmission_error_static(m, 2.0, 20);
  expect_rel(w.value, kStaticWorst, 1e-8);
  EXPECT_EQ(w.argmax, 20u);
  // The normal approximation makes g(r) creep back up as combining saturates.
  EXPECT_FALSE(w.monotone_decreasing);
  double brute = 0.0;
  for (std::size_t r = 2; r <= 20; ++r) brute = std::max(brute, static_error_prob(m, 2.0, r));
  EXPECT_EQ(w.value, brute);
}

TEST(WorstCaseStatic, DecreasingProfileAttainsAtTwo) {
  // At low SNR each extra copy still buys a lot, so g is decreasing.
  const auto m = HarqModel::from_db(HarqScheme::chase_combining, 0.0, 100, 1.0);
  const auto w = worst_retransmission_error_static(m, 1.0, 4);
  EXPECT_TRUE(w.monotone_decreasing);
  EXPECT_EQ(w.argmax, 2u);
  EXPECT_EQ(w.value, static_error_prob(m, 1.0, 2));
  EXPECT_THROW(worst_retransmission_error_static(m, 1.0, 1), UsageError);
}

TEST(WorstCaseMarkov, MatchesExhaustiveEnumeration) {
  for (auto scheme : {HarqScheme::chase_combining, HarqScheme::incremental_redundancy}) {
    const auto m = fixtures::reference_harq(scheme);
    const std::vector<double> gains{2.0, 1.0};
    for (std::size_t i = 0; i < 2; ++i) {
      double brute = 0.0;
      int visited = 0;
      for (int a = 0; a <= 8; ++a) {
        for (int b = 0; a + b <= 8; ++b) {
          if (a + b == 0) continue;
          ++visited;
          brute = std::max(brute, conditional_error_prob(m, gains, HistoryCounter(std::vector{a, b}), i));
        }
      }
      EXPECT_EQ(visited, 44);
      const auto w = worst_retransmission_error_markov(m, gains, i, 8);
      EXPECT_EQ(w.value, brute);
      EXPECT_LE(w.argmax.total(), 8);
      EXPECT_GE(w.argmax.total(), 1);
    }
  }
}

TEST(WorstCaseMarkov, HistoryEnumerationCount) {
  int count = 0;
  std::map<std::vector<int>, int> seen;
  for_each_history(3, 4, [&](const HistoryCounter& h) {
    ++count;
    ++seen[h.counts()];
    EXPECT_GE(h.total(), 1);
    EXPECT_LE(h.total(), 4);
  });
  EXPECT_EQ(count, 34);  // C(4+3,3) - 1
  EXPECT_EQ(seen.size(), 34u);
}

TEST(ErrorFunction, TableMatchesDirectComputation) {
  const auto m = fixtures::reference_harq(HarqScheme::incremental_redundancy);
  const std::vector<double> gains{2.0, 1.0};
  const auto f = make_error_function(m, gains);
  for (int a = 0; a <= 3; ++a) {
    for (int b = 0; b <= 3; ++b) {
      for (std::size_t i = 0; i < 2; ++i) {
        const HistoryCounter h(std::vector<int>{a, b});
        EXPECT_EQ(f(h, i), conditional_error_prob(m, gains, h, i));
        EXPECT_EQ(f(h, i), f(h, i));
      }
    }
  }
}

TEST(ErrorFunction, ProfileClampsBeyondLastAttempt) {
  const auto f = make_error_function(ErrorProfile({0.5, 0.25, 0.125}));
  EXPECT_EQ(f(HistoryCounter(1), 0), 0.5);
  EXPECT_EQ(f(HistoryCounter(std::vector{2}), 0), 0.125);
  EXPECT_EQ(f(HistoryCounter(std::vector{7}), 0), 0.125);
}
