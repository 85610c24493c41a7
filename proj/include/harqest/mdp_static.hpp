#pragma once

// Static-channel scheduling MDP over states (r, q): r consecutive attempts of
// the message in flight, q the receiver's age of information.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "harqest/errors.hpp"
#include "harqest/harq_model.hpp"
#include "harqest/lti_estimation.hpp"
#include "harqest/mdp.hpp"

namespace harqest {

struct StaticState {
  int r = 1;
  int q = 1;
  friend bool operator==(const StaticState&, const StaticState&) = default;
};

inline std::string to_string(const StaticState& s) { return std::to_string(s.r) + "," + std::to_string(s.q); }

/// {(r, q) : 1 <= r <= q <= q_max, r <= r_max}, ordered r-major; (1,1) is
/// index 0.
class StaticStateSpace {
 public:
  using State = StaticState;

  StaticStateSpace() = default;
  StaticStateSpace(int r_max, int q_max) : r_max_(r_max), q_max_(q_max) {
    if (r_max < 2) throw ConfigError("r_max must be at least 2");
    if (q_max < r_max) throw ConfigError("q_max must be at least r_max");
    index_.assign(static_cast<std::size_t>((r_max + 1) * (q_max + 1)), -1);
    for (int r = 1; r <= r_max; ++r) {
      for (int q = r; q <= q_max; ++q) {
        index_[slot(r, q)] = static_cast<int>(states_.size());
        states_.push_back({r, q});
      }
    }
  }

  int r_max() const noexcept { return r_max_; }
  int q_max() const noexcept { return q_max_; }
  std::size_t size() const noexcept { return states_.size(); }
  const std::vector<StaticState>& states() const noexcept { return states_; }
  const StaticState& state(std::size_t i) const { return states_.at(i); }

  std::optional<std::size_t> index_of(const StaticState& s) const {
    if (s.r < 1 || s.r > r_max_ || s.q < s.r || s.q > q_max_) return std::nullopt;
    return static_cast<std::size_t>(index_[slot(s.r, s.q)]);
  }

  std::size_t index(const StaticState& s) const {
    if (auto i = index_of(s)) return *i;
    throw UsageError("state (" + to_string(s) + ") outside the truncation");
  }

  /// Clamps r to [1, r_max] and q to [r, q_max].
  std::size_t saturated_index(const StaticState& s) const {
    const int r = std::clamp(s.r, 1, r_max_);
    const int q = std::clamp(s.q, r, q_max_);
    return static_cast<std::size_t>(index_[slot(r, q)]);
  }

  std::string key(std::size_t i) const { return to_string(states_.at(i)); }

  friend bool operator==(const StaticStateSpace& a, const StaticStateSpace& b) {
    return a.r_max_ == b.r_max_ && a.q_max_ == b.q_max_;
  }

 private:
  std::size_t slot(int r, int q) const { return static_cast<std::size_t>(r * (q_max_ + 1) + q); }

  int r_max_ = 0;
  int q_max_ = 0;
  std::vector<StaticState> states_;
  std::vector<int> index_;
};

using StaticPolicy = Policy<StaticStateSpace>;

struct StabilityVerdict {
  double product = 0.0;
  bool stable = false;  // sufficient condition only
};

/// Lambda_0 * rho^2(A) < 1 guarantees a bounded-cost optimal policy.
inline StabilityVerdict check_stability_static(double lambda0, double rho_sq_a) {
  const double product = lambda0 * rho_sq_a;
  return {product, product < 1.0};
}

struct StaticMdp {
  StaticStateSpace space;
  FiniteMdp mdp;
  ErrorProfile g;
  CostMode cost_mode = CostMode::mse;
};

/// Truncated kernel. Failures that would push q past q_max stay at q_max;
/// retransmission is unavailable at r = r_max.
inline StaticMdp build_static_mdp(const CostLadder& ladder, const ErrorProfile& g, int r_max, int q_max,
                                  CostMode mode) {
  StaticStateSpace space(r_max, q_max);
  if (g.size() < static_cast<std::size_t>(r_max)) {
    throw UsageError("error profile must cover attempts 1..r_max");
  }
  if (mode == CostMode::mse && ladder.max_depth() < static_cast<std::size_t>(q_max)) {
    throw UsageError("cost ladder must reach q_max");
  }
  FiniteMdp mdp(space.size());
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto [r, q] = space.state(i);
    const double cost = mode == CostMode::mse ? ladder[static_cast<std::size_t>(q)] : static_cast<double>(q);
    const int q_fail = std::min(q + 1, q_max);
    const double g1 = g(1);
    mdp.set(i, Action::new_transmission, cost,
            {{space.index({1, 1}), 1.0 - g1}, {space.index({1, q_fail}), g1}});
    if (r < r_max) {
      const double gr = g(static_cast<std::size_t>(r + 1));
      mdp.set(i, Action::retransmit, cost,
              {{space.index({r + 1, r + 1}), 1.0 - gr}, {space.index({r + 1, q_fail}), gr}});
    }
  }
  return StaticMdp{std::move(space), std::move(mdp), g, mode};
}

inline StaticMdp build_static_mdp(const LtiSystem& sys, const SteadyStateKalman& kal, const HarqModel& harq,
                                  double gain, int r_max, int q_max, CostMode mode) {
  const auto ladder = build_cost_ladder(sys, kal, static_cast<std::size_t>(q_max) + 2);
  return build_static_mdp(ladder, ErrorProfile::from_model(harq, gain, static_cast<std::size_t>(r_max)), r_max,
                          q_max, mode);
}

/// Relative value iteration with reference state (1,1).
inline StaticPolicy solve_rvi(const StaticMdp& problem, RviOptions opt = {}) {
  opt.reference_state = problem.space.index({1, 1});
  auto result = solve_rvi(problem.mdp, opt);
  return StaticPolicy{problem.space, std::move(result.actions), problem.cost_mode, result.average_cost,
                      result.report};
}

/// Monotone structure: pi(r,q)=0 implies pi(r+z,q)=0, and pi(r,q)=1 implies
/// pi(r,q+z)=1, for every in-grid z > 0.
inline SwitchingReport<StaticState> verify_switching(const StaticPolicy& policy) {
  SwitchingReport<StaticState> report;
  const auto& space = policy.space;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const StaticState s = space.state(i);
    if (policy.action(i) == Action::new_transmission) {
      for (int r = s.r + 1; r <= std::min(s.q, space.r_max()); ++r) {
        if (policy.action(space.index({r, s.q})) != Action::new_transmission) {
          report.violations.emplace_back(s, StaticState{r, s.q});
        }
      }
    } else {
      for (int q = s.q + 1; q <= space.q_max(); ++q) {
        if (policy.action(space.index({s.r, q})) != Action::retransmit) {
          report.violations.emplace_back(s, StaticState{s.r, q});
        }
      }
    }
  }
  report.pass = report.violations.empty();
  return report;
}

/// One-step lookahead decision. Retransmitting is chosen unless
///   Tr f^{q+1} <= [(1-g_retx) Tr f^{r+1} - (1-g_new) Tr f] / (g_new - g_retx);
/// a vanishing denominator means no reliability gain, so a new transmission.
inline Action myopic_action(const CostLadder& ladder, double g_new, double g_retx, int r, int q) {
  const double denom = g_new - g_retx;
  if (std::abs(denom) < 1e-15) return Action::new_transmission;
  const double lhs = ladder.at(static_cast<std::size_t>(q) + 1);
  const double rhs = ((1.0 - g_retx) * ladder.at(static_cast<std::size_t>(r) + 1) - (1.0 - g_new) * ladder.at(1)) / denom;
  // A negative denominator flips the inequality.
  const bool keep_new = denom > 0.0 ? lhs <= rhs : lhs >= rhs;
  return keep_new ? Action::new_transmission : Action::retransmit;
}

inline StaticPolicy tabulate(const StaticMdp& problem, std::vector<Action> actions) {
  const double cost = evaluate_policy(problem.mdp, actions);
  return StaticPolicy{problem.space, std::move(actions), problem.cost_mode, cost, {}};
}

/// Myopic policy on the truncated grid; its average cost is evaluated exactly
/// on the same truncated MDP.
inline StaticPolicy myopic_policy(const StaticMdp& problem, const CostLadder& ladder) {
  const auto& space = problem.space;
  if (ladder.max_depth() < static_cast<std::size_t>(space.q_max()) + 1) {
    throw UsageError("myopic policy needs the cost ladder up to q_max + 1");
  }
  std::vector<Action> actions(space.size(), Action::new_transmission);
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto [r, q] = space.state(i);
    if (r == space.r_max()) continue;
    actions[i] = myopic_action(ladder, problem.g(1), problem.g(static_cast<std::size_t>(r + 1)), r, q);
  }
  return tabulate(problem, std::move(actions));
}

/// Always retransmit until success, then transmit fresh (a = 0 iff r = q).
inline StaticPolicy psi_policy(const StaticMdp& problem) {
  const auto& space = problem.space;
  std::vector<Action> actions(space.size());
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto [r, q] = space.state(i);
    actions[i] = (r == q || r == space.r_max()) ? Action::new_transmission : Action::retransmit;
  }
  return tabulate(problem, std::move(actions));
}

inline StaticPolicy no_retransmission_policy(const StaticMdp& problem) {
  return tabulate(problem, std::vector<Action>(problem.space.size(), Action::new_transmission));
}

/// Long-run average cost of the threshold policy "(1,q) retransmits iff
/// q > theta, everything else transmits fresh" when retransmissions always
/// succeed and a new transmission fails with probability `lambda_new`.
inline double high_snr_static_cost(const CostLadder& ladder, double lambda_new, int theta) {
  if (theta < 1) throw UsageError("theta must be at least 1");
  const double l = lambda_new;
  auto c = [&](int n) { return ladder.at(static_cast<std::size_t>(n)); };
  if (theta == 1) {
    return ((1.0 - l) * c(1) + (2.0 * l - l * l) * c(2) + l * l * c(3)) / (1.0 + l);
  }
  // Numerator and denominator share a factor (1 - l), divided out here.
  double numerator = -c(1) * std::pow(l, theta - 1);
  double power = 1.0;
  for (int i = 1; i <= theta + 1; ++i, power *= l) numerator += c(i) * power;
  double denominator = std::pow(l, theta);
  power = 1.0;
  for (int j = 0; j <= theta - 2; ++j, power *= l) denominator += power;
  return numerator / denominator;
}

struct HighSnrStaticResult {
  int theta = 1;
  double average_cost = 0.0;
  std::vector<double> cost_by_theta;  // entry t-1 for threshold t
};

/// Linear search of the retransmission threshold in the always-successful-
/// retransmission regime.
inline HighSnrStaticResult high_snr_optimal_static(const CostLadder& ladder, double lambda_new, int theta_max) {
  if (theta_max < 1) throw UsageError("theta_max must be at least 1");
  if (!(lambda_new >= 0.0 && lambda_new <= 1.0)) throw UsageError("error probability must lie in [0,1]");
  HighSnrStaticResult out;
  for (int theta = 1; theta <= theta_max; ++theta) {
    const double cost = high_snr_static_cost(ladder, lambda_new, theta);
    out.cost_by_theta.push_back(cost);
    if (theta == 1 || cost < out.average_cost) {
      out.theta = theta;
      out.average_cost = cost;
    }
  }
  return out;
}

}  // namespace harqest
