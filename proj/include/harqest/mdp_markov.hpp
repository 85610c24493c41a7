#pragma once

// Markov-channel scheduling MDP over states (Omega, q, xi): Omega counts the
// buffered attempts per channel state, q is the age of information and xi
// the current channel state.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "harqest/channel.hpp"
#include "harqest/errors.hpp"
#include "harqest/harq_model.hpp"
#include "harqest/lti_estimation.hpp"
#include "harqest/mdp.hpp"
#include "harqest/mdp_static.hpp"

namespace harqest {

struct MarkovState {
  HistoryCounter omega;
  int q = 1;
  std::size_t xi = 0;
  friend bool operator==(const MarkovState&, const MarkovState&) = default;
};

/// "r1,...,rB|q|xi" with a 1-based channel index.
inline std::string to_string(const MarkovState& s) {
  return s.omega.to_string() + "|" + std::to_string(s.q) + "|" + std::to_string(s.xi + 1);
}

/// Truncation {0 <= Omega_i <= cap_i, 1 <= |Omega| <= q <= q_max}.
class MarkovStateSpace {
 public:
  using State = MarkovState;

  MarkovStateSpace() = default;
  MarkovStateSpace(std::vector<int> caps, int q_max) : caps_(std::move(caps)), q_max_(q_max) {
    if (caps_.empty()) throw ConfigError("omega caps must name at least one channel state");
    int total = 0;
    for (int c : caps_) {
      if (c < 1) throw ConfigError("every omega cap must be at least 1");
      total += c;
    }
    if (q_max_ < total + 1) {
      throw ConfigError("q_max must be at least the sum of omega caps plus one (" + std::to_string(total + 1) + ")");
    }
    std::size_t radix = 1;
    for (int c : caps_) radix *= static_cast<std::size_t>(c + 1);
    omega_radix_ = radix;
    index_.assign(radix * static_cast<std::size_t>(q_max_ + 1) * caps_.size(), -1);
    for (std::size_t xi = 0; xi < caps_.size(); ++xi) {
      for_each_omega([&](const HistoryCounter& omega) {
        for (int q = omega.total(); q <= q_max_; ++q) {
          index_[slot(omega, q, xi)] = static_cast<int>(states_.size());
          states_.push_back({omega, q, xi});
        }
      });
    }
  }

  std::size_t channel_states() const noexcept { return caps_.size(); }
  const std::vector<int>& caps() const noexcept { return caps_; }
  int q_max() const noexcept { return q_max_; }
  std::size_t size() const noexcept { return states_.size(); }
  const std::vector<MarkovState>& states() const noexcept { return states_; }
  const MarkovState& state(std::size_t i) const { return states_.at(i); }

  bool contains_omega(const HistoryCounter& omega) const {
    if (omega.size() != caps_.size() || omega.is_zero()) return false;
    for (std::size_t i = 0; i < caps_.size(); ++i) {
      if (omega[i] > caps_[i]) return false;
    }
    return true;
  }

  std::optional<std::size_t> index_of(const MarkovState& s) const {
    if (!contains_omega(s.omega) || s.xi >= caps_.size() || s.q < s.omega.total() || s.q > q_max_) {
      return std::nullopt;
    }
    return static_cast<std::size_t>(index_[slot(s.omega, s.q, s.xi)]);
  }

  std::size_t index(const MarkovState& s) const {
    if (auto i = index_of(s)) return *i;
    throw UsageError("state (" + to_string(s) + ") outside the truncation");
  }

  /// Clamps each Omega entry to its cap (an all-zero Omega becomes the unit
  /// vector at xi) and q to [|Omega|, q_max].
  std::size_t saturated_index(const MarkovState& s) const {
    if (s.omega.size() != caps_.size() || s.xi >= caps_.size()) throw UsageError("state shape mismatch");
    std::vector<int> counts(caps_.size());
    for (std::size_t i = 0; i < caps_.size(); ++i) counts[i] = std::clamp(s.omega[i], 0, caps_[i]);
    HistoryCounter omega(std::move(counts));
    if (omega.is_zero()) omega = HistoryCounter::unit(caps_.size(), s.xi);
    const int q = std::clamp(s.q, omega.total(), q_max_);
    return static_cast<std::size_t>(index_[slot(omega, q, s.xi)]);
  }

  std::string key(std::size_t i) const { return to_string(states_.at(i)); }

  MarkovState reference_state() const { return {HistoryCounter::unit(caps_.size(), 0), 1, 0}; }

  friend bool operator==(const MarkovStateSpace& a, const MarkovStateSpace& b) {
    return a.caps_ == b.caps_ && a.q_max_ == b.q_max_;
  }

 private:
  template <class F>
  void for_each_omega(F&& visit) const {
    std::vector<int> counts(caps_.size(), 0);
    auto recurse = [&](auto&& self, std::size_t dim) -> void {
      if (dim == caps_.size()) {
        HistoryCounter omega(counts);
        if (!omega.is_zero()) visit(omega);
        return;
      }
      for (int c = 0; c <= caps_[dim]; ++c) {
        counts[dim] = c;
        self(self, dim + 1);
      }
    };
    recurse(recurse, 0);
  }

  std::size_t slot(const HistoryCounter& omega, int q, std::size_t xi) const {
    std::size_t o = 0;
    for (std::size_t i = 0; i < caps_.size(); ++i) o = o * static_cast<std::size_t>(caps_[i] + 1) + static_cast<std::size_t>(omega[i]);
    return (xi * static_cast<std::size_t>(q_max_ + 1) + static_cast<std::size_t>(q)) * omega_radix_ + o;
  }

  std::vector<int> caps_;
  int q_max_ = 0;
  std::size_t omega_radix_ = 1;
  std::vector<MarkovState> states_;
  std::vector<int> index_;
};

using MarkovPolicy = Policy<MarkovStateSpace>;

/// rho(Pi diag(Lambda)) * rho^2(A) < 1 guarantees a bounded-cost optimal
/// policy.
inline StabilityVerdict check_stability_markov(const Matrix& pi, const std::vector<double>& lambdas, double rho_sq_a) {
  if (pi.rows() != static_cast<Eigen::Index>(lambdas.size()) || pi.cols() != pi.rows()) {
    throw DimensionError("check_stability_markov: Pi and Lambda sizes differ");
  }
  Vector diag(static_cast<Eigen::Index>(lambdas.size()));
  for (std::size_t i = 0; i < lambdas.size(); ++i) diag(static_cast<Eigen::Index>(i)) = lambdas[i];
  const Matrix product = pi * diag.asDiagonal();
  const double value = spectral_radius(product) * rho_sq_a;
  return {value, value < 1.0};
}

struct StabilityCell {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double product = 0.0;
  bool stable = false;
};

/// Verdicts on the (Lambda_1, Lambda_2) grid {0, 1/n, ..., 1}^2 for a
/// two-state channel.
inline std::vector<StabilityCell> stability_region(const Matrix& pi, double rho_sq_a, int resolution) {
  if (pi.rows() != 2 || pi.cols() != 2) throw DimensionError("stability_region needs a two-state channel");
  if (resolution < 1) throw UsageError("resolution must be positive");
  std::vector<StabilityCell> cells;
  cells.reserve(static_cast<std::size_t>((resolution + 1) * (resolution + 1)));
  for (int i = 0; i <= resolution; ++i) {
    for (int j = 0; j <= resolution; ++j) {
      const double l1 = static_cast<double>(i) / resolution;
      const double l2 = static_cast<double>(j) / resolution;
      const auto v = check_stability_markov(pi, {l1, l2}, rho_sq_a);
      cells.push_back({l1, l2, v.product, v.stable});
    }
  }
  return cells;
}

struct MarkovMdp {
  MarkovStateSpace space;
  MarkovChannel channel;
  FiniteMdp mdp;
  CostMode cost_mode = CostMode::mse;
};

/// Truncated kernel. Failures clamp q at q_max; retransmission is
/// unavailable once the current channel's Omega entry sits at its cap.
inline MarkovMdp build_markov_mdp(const CostLadder& ladder, const MarkovChannel& ch, const ErrorFunction& error,
                                  const std::vector<int>& omega_caps, int q_max, CostMode mode) {
  if (omega_caps.size() != ch.size()) throw ConfigError("one omega cap per channel state is required");
  MarkovStateSpace space(omega_caps, q_max);
  if (mode == CostMode::mse && ladder.max_depth() < static_cast<std::size_t>(q_max)) {
    throw UsageError("cost ladder must reach q_max");
  }
  const std::size_t b = ch.size();
  FiniteMdp mdp(space.size());
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto& s = space.state(i);
    const double cost = mode == CostMode::mse ? ladder[static_cast<std::size_t>(s.q)] : static_cast<double>(s.q);
    const int q_fail = std::min(s.q + 1, q_max);

    const HistoryCounter fresh = HistoryCounter::unit(b, s.xi);
    const double g_new = error(HistoryCounter(b), s.xi);
    std::vector<Transition> out;
    for (std::size_t next = 0; next < b; ++next) {
      const double p = ch.transition(s.xi, next);
      out.push_back({space.index({fresh, 1, next}), p * (1.0 - g_new)});
      out.push_back({space.index({fresh, q_fail, next}), p * g_new});
    }
    mdp.set(i, Action::new_transmission, cost, std::move(out));

    if (s.omega[s.xi] < omega_caps[s.xi]) {
      const HistoryCounter grown = s.omega.incremented(s.xi);
      const double g_retx = error(s.omega, s.xi);
      std::vector<Transition> retx;
      for (std::size_t next = 0; next < b; ++next) {
        const double p = ch.transition(s.xi, next);
        retx.push_back({space.index({grown, s.omega.total() + 1, next}), p * (1.0 - g_retx)});
        retx.push_back({space.index({grown, q_fail, next}), p * g_retx});
      }
      mdp.set(i, Action::retransmit, cost, std::move(retx));
    }
  }
  return MarkovMdp{std::move(space), ch, std::move(mdp), mode};
}

inline MarkovMdp build_markov_mdp(const LtiSystem& sys, const SteadyStateKalman& kal, const HarqModel& harq,
                                  const MarkovChannel& ch, const std::vector<int>& omega_caps, int q_max,
                                  CostMode mode) {
  const auto ladder = build_cost_ladder(sys, kal, static_cast<std::size_t>(q_max) + 2);
  return build_markov_mdp(ladder, ch, make_error_function(harq, ch.gains()), omega_caps, q_max, mode);
}

/// Relative value iteration with reference state ((1,0,...), 1, 1).
inline MarkovPolicy solve_rvi(const MarkovMdp& problem, RviOptions opt = {}) {
  opt.reference_state = problem.space.index(problem.space.reference_state());
  auto result = solve_rvi(problem.mdp, opt);
  return MarkovPolicy{problem.space, std::move(result.actions), problem.cost_mode, result.average_cost,
                      result.report};
}

/// pi(Omega,q,xi)=0 implies pi(Omega + z 1_i, q, xi)=0 for every i, and
/// pi(Omega,q,xi)=1 implies pi(Omega, q+z, xi)=1, within the grid.
inline SwitchingReport<MarkovState> verify_switching_markov(const MarkovPolicy& policy) {
  SwitchingReport<MarkovState> report;
  const auto& space = policy.space;
  for (std::size_t idx = 0; idx < space.size(); ++idx) {
    const MarkovState& s = space.state(idx);
    if (policy.action(idx) == Action::new_transmission) {
      for (std::size_t i = 0; i < space.channel_states(); ++i) {
        for (int z = 1;; ++z) {
          MarkovState bigger{s.omega.incremented(i, z), s.q, s.xi};
          auto j = space.index_of(bigger);
          if (!j) break;
          if (policy.action(*j) != Action::new_transmission) report.violations.emplace_back(s, std::move(bigger));
        }
      }
    } else {
      for (int q = s.q + 1; q <= space.q_max(); ++q) {
        MarkovState later{s.omega, q, s.xi};
        if (policy.action(space.index(later)) != Action::retransmit) report.violations.emplace_back(s, std::move(later));
      }
    }
  }
  report.pass = report.violations.empty();
  return report;
}

inline MarkovPolicy tabulate(const MarkovMdp& problem, std::vector<Action> actions) {
  const double cost =
      evaluate_policy(problem.mdp, actions);
  return MarkovPolicy{problem.space, std::move(actions), problem.cost_mode, cost, {}};
}

/// One-step lookahead policy on the truncated grid, with the channel-state
/// dependent error probabilities in place of g(1) and g(r+1).
inline MarkovPolicy myopic_policy(const MarkovMdp& problem, const CostLadder& ladder, const ErrorFunction& error) {
  const auto& space = problem.space;
  const std::size_t b = space.channel_states();
  std::vector<Action> actions(space.size(), Action::new_transmission);
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto& s = space.state(i);
    if (!problem.mdp.row(i, Action::retransmit).available) continue;
    actions[i] = myopic_action(ladder, error(HistoryCounter(b), s.xi), error(s.omega, s.xi), s.omega.total(), s.q);
  }
  return tabulate(problem, std::move(actions));
}

/// Reduced chain of the always-successful-retransmission regime. Per channel
/// block the states are ordered (2,2), (1,1), ..., (1, theta_max+1);
/// state (1,q) in channel i retransmits iff q > theta_i.
struct HighSnrChain {
  std::vector<int> theta;
  int theta_max = 1;        // padded to at least 2 so (1,3) always exists
  std::size_t block = 0;    // theta_max + 2
  Matrix transition;        // column-stochastic, B*block square
  Vector cost;              // per-state MSE
};

/// Transition block of channel i: column = current state, row = next state
/// within the same slot's transition, before the channel moves.
inline Matrix high_snr_block(double lambda_new, int theta_i, std::size_t block) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(block), static_cast<Eigen::Index>(block));
  // (2,2) always transmits fresh; failure lands on (1,3).
  m(1, 0) += 1.0 - lambda_new;
  m(3, 0) += lambda_new;
  for (Eigen::Index q = 1; q < static_cast<Eigen::Index>(block); ++q) {
    if (q <= theta_i) {
      m(1, q) += 1.0 - lambda_new;
      m(q + 1, q) += lambda_new;
    } else {
      m(0, q) += 1.0;
    }
  }
  return m;
}

inline HighSnrChain build_high_snr_chain(const CostLadder& ladder, const Matrix& pi, const std::vector<double>& lambda_new,
                                         const std::vector<int>& theta) {
  const auto b = static_cast<std::size_t>(pi.rows());
  if (pi.cols() != pi.rows() || lambda_new.size() != b || theta.size() != b) {
    throw DimensionError("high-SNR chain: Pi, lambda and theta sizes differ");
  }
  HighSnrChain chain;
  chain.theta = theta;
  for (int t : theta) {
    if (t < 1) throw UsageError("thresholds must be at least 1");
  }
  chain.theta_max = std::max(2, *std::max_element(theta.begin(), theta.end()));
  chain.block = static_cast<std::size_t>(chain.theta_max) + 2;
  const auto blk = static_cast<Eigen::Index>(chain.block);
  const auto B = static_cast<Eigen::Index>(b);
  chain.transition = Matrix::Zero(B * blk, B * blk);
  for (Eigen::Index i = 0; i < B; ++i) {
    const Matrix mi = high_snr_block(lambda_new[static_cast<std::size_t>(i)], theta[static_cast<std::size_t>(i)], chain.block);
    chain.transition.middleCols(i * blk, blk) = kronecker(pi.col(i), mi);
  }
  Vector per_block(blk);
  per_block(0) = ladder.at(2);
  for (Eigen::Index q = 1; q < blk; ++q) per_block(q) = ladder.at(static_cast<std::size_t>(q));
  chain.cost = kronecker(Vector::Ones(B), per_block);
  return chain;
}

/// c'e / |e|_1 with e spanning the null space of (M - I).
inline double high_snr_chain_cost(const HighSnrChain& chain) {
  const auto n = chain.transition.rows();
  const Vector e = null_space_vector(chain.transition - Matrix::Identity(n, n));
  return chain.cost.dot(e) / e.lpNorm<1>();
}

struct HighSnrMarkovResult {
  std::vector<int> theta;
  double average_cost = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // degenerate null spaces
  std::vector<std::pair<std::vector<int>, double>> costs;
};

/// Exhaustive search of the per-channel thresholds over {1..theta_max_search}^B.
inline HighSnrMarkovResult high_snr_markov(const CostLadder& ladder, const MarkovChannel& ch,
                                           const std::vector<double>& lambda_new, int theta_max_search) {
  if (theta_max_search < 1) throw UsageError("theta search bound must be at least 1");
  const std::size_t b = ch.size();
  HighSnrMarkovResult out;
  std::vector<int> theta(b, 1);
  bool have = false;
  while (true) {
    try {
      const double cost = high_snr_chain_cost(build_high_snr_chain(ladder, ch.transition_matrix(), lambda_new, theta));
      out.costs.emplace_back(theta, cost);
      ++out.evaluated;
      if (!have || cost < out.average_cost) {
        out.theta = theta;
        out.average_cost = cost;
        have = true;
      }
    } catch (const DegenerateModelError&) {
      ++out.skipped;
    }
    std::size_t d = 0;
    while (d < b && theta[d] == theta_max_search) theta[d++] = 1;
    if (d == b) break;
    ++theta[d];
  }
  if (!have) throw DegenerateModelError("high_snr_markov: every threshold vector was degenerate");
  return out;
}

}  // namespace harqest
