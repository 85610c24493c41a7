#pragma once

// Finite two-action average-cost MDPs and relative value iteration. The
// static and Markov-channel problems both lower onto FiniteMdp.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "harqest/errors.hpp"
#include "harqest/history.hpp"
#include "harqest/numerics.hpp"

namespace harqest {

enum class CostMode { mse, delay };

inline std::string to_string(CostMode m) { return m == CostMode::mse ? "mse" : "delay"; }

struct Transition {
  std::size_t next = 0;
  double probability = 0.0;
};

struct ActionRow {
  bool available = false;
  double cost = 0.0;
  std::vector<Transition> transitions;
};

class FiniteMdp {
 public:
  FiniteMdp() = default;
  explicit FiniteMdp(std::size_t states) : rows_(states) {}

  std::size_t size() const noexcept { return rows_.size(); }

  const ActionRow& row(std::size_t s, Action a) const { return rows_.at(s)[static_cast<std::size_t>(a)]; }

  /// Defines (s, a). Transitions to the same successor are merged.
  void set(std::size_t s, Action a, double cost, std::vector<Transition> transitions) {
    std::sort(transitions.begin(), transitions.end(),
              [](const Transition& x, const Transition& y) { return x.next < y.next; });
    std::vector<Transition> merged;
    for (const auto& t : transitions) {
      if (t.next >= rows_.size()) throw UsageError("transition target out of range");
      if (!merged.empty() && merged.back().next == t.next) {
        merged.back().probability += t.probability;
      } else {
        merged.push_back(t);
      }
    }
    auto& r = rows_.at(s)[static_cast<std::size_t>(a)];
    r.available = true;
    r.cost = cost;
    r.transitions = std::move(merged);
  }

  /// Largest |sum of row probabilities - 1| over all defined rows.
  double max_row_deviation() const {
    double worst = 0.0;
    for (const auto& actions : rows_) {
      for (const auto& r : actions) {
        if (!r.available) continue;
        double sum = 0.0;
        for (const auto& t : r.transitions) sum += t.probability;
        worst = std::max(worst, std::abs(sum - 1.0));
      }
    }
    return worst;
  }

  void validate(double tol = 1e-12) const {
    for (std::size_t s = 0; s < rows_.size(); ++s) {
      if (!rows_[s][0].available && !rows_[s][1].available) {
        throw ModelError("state " + std::to_string(s) + " has no available action");
      }
      for (const auto& r : rows_[s]) {
        for (const auto& t : r.transitions) {
          if (t.probability < 0.0) throw ModelError("negative transition probability");
        }
      }
    }
    if (max_row_deviation() > tol) throw ModelError("transition rows do not sum to 1");
  }

 private:
  std::vector<std::array<ActionRow, 2>> rows_;
};

struct RviOptions {
  double tol = 1e-9;
  std::size_t max_iters = 100000;
  std::size_t reference_state = 0;
  // Relative Q-value gap below which action 0 wins.
  double tie_tol = 1e-12;
  // Aperiodicity transform P -> tau P + (1 - tau) I; 1 disables it. The
  // average cost and the optimal policy are unchanged, but deterministic
  // cycles (a fresh packet that always fails followed by a retransmission
  // that always succeeds) no longer make the value differences oscillate.
  double tau = 0.5;
  // Iterations without a smaller span after which a span at the round-off
  // floor counts as converged.
  std::size_t stall_window = 20;
};

struct ConvergenceReport {
  std::size_t iterations = 0;
  double span = 0.0;         // span of the last value difference
  double lower = 0.0;        // bounds on the optimal average cost
  double upper = 0.0;
  double noise_floor = 0.0;  // round-off level of the value differences
  bool noise_limited = false;
};

struct RviResult {
  std::vector<Action> actions;
  double average_cost = 0.0;
  std::vector<double> values;
  ConvergenceReport report;
};

namespace detail {

inline double expected_value(const ActionRow& row, std::span<const double> h) {
  double acc = 0.0;
  for (const auto& t : row.transitions) acc += t.probability * h[t.next];
  return acc;
}

// Returns the preferred action and its Q-value.
inline std::pair<Action, double> greedy(const FiniteMdp& mdp, std::size_t s, std::span<const double> h,
                                        const RviOptions& opt) {
  double q[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (std::size_t a = 0; a < 2; ++a) {
    const auto& row = mdp.row(s, static_cast<Action>(a));
    if (!row.available) continue;
    q[a] = row.cost + opt.tau * expected_value(row, h) + (1.0 - opt.tau) * h[s];
  }
  const double scale = std::max(1.0, std::abs(q[0]));
  if (q[0] <= q[1] + opt.tie_tol * scale) return {Action::new_transmission, q[0]};
  return {Action::retransmit, q[1]};
}

}  // namespace detail

/// Stationary distribution of the chain induced by a deterministic policy.
/// Throws ModelError unless the chain has a single recurrent class.
inline Vector policy_stationary_distribution(const FiniteMdp& mdp, std::span<const Action> actions) {
  const std::size_t n = mdp.size();
  if (actions.size() != n) throw UsageError("policy needs one action per state");
  const auto N = static_cast<Eigen::Index>(n);
  // Rows: balance equations (P^T - I) pi = 0 plus the normalization row.
  Matrix system = -Matrix::Identity(N + 1, N);
  system.row(N).setOnes();
  for (std::size_t s = 0; s < n; ++s) {
    const auto& row = mdp.row(s, actions[s]);
    if (!row.available) throw UsageError("action unavailable in state " + std::to_string(s));
    for (const auto& t : row.transitions) {
      system(static_cast<Eigen::Index>(t.next), static_cast<Eigen::Index>(s)) += t.probability;
    }
  }
  Vector rhs = Vector::Zero(N + 1);
  rhs(N) = 1.0;
  Eigen::FullPivLU<Matrix> lu(system);
  if (lu.rank() < N) throw ModelError("policy chain has more than one recurrent class");
  Vector pi = lu.solve(rhs);
  if ((system * pi - rhs).lpNorm<Eigen::Infinity>() > 1e-9) throw ModelError("policy chain has no unique stationary law");
  return pi.cwiseMax(0.0) / pi.cwiseMax(0.0).sum();
}

/// Exact long-run average cost of a stationary deterministic policy on a
/// unichain MDP: the stationary law weighted by the per-state cost.
inline double evaluate_policy(const FiniteMdp& mdp, std::span<const Action> actions) {
  const Vector pi = policy_stationary_distribution(mdp, actions);
  double acc = 0.0;
  for (std::size_t s = 0; s < mdp.size(); ++s) acc += pi(static_cast<Eigen::Index>(s)) * mdp.row(s, actions[s]).cost;
  return acc;
}

/// Relative value iteration. Stops once the span of successive value
/// differences drops below tol, or once it has stopped shrinking for
/// stall_window iterations while sitting at the double-precision resolution
/// of the largest value (costs that grow geometrically with the age make
/// small absolute tolerances unreachable). The reported average cost is the
/// exact cost of the final greedy policy when that policy is unichain, else
/// the midpoint of the span bounds.
inline RviResult solve_rvi(const FiniteMdp& mdp, const RviOptions& opt = {}) {
  const std::size_t n = mdp.size();
  if (n == 0) throw UsageError("solve_rvi: empty MDP");
  if (opt.reference_state >= n) throw UsageError("solve_rvi: reference state out of range");
  if (!(opt.tau > 0.0 && opt.tau <= 1.0)) throw UsageError("solve_rvi: tau must lie in (0, 1]");

  std::vector<double> h(n, 0.0), w(n, 0.0);
  std::vector<Action> actions(n, Action::new_transmission);
  RviResult result;
  double best_span = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t it = 1; it <= opt.max_iters; ++it) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    double magnitude = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const auto [a, value] = detail::greedy(mdp, s, h, opt);
      actions[s] = a;
      w[s] = value;
      const double diff = value - h[s];
      lo = std::min(lo, diff);
      hi = std::max(hi, diff);
      magnitude = std::max({magnitude, std::abs(value), std::abs(h[s])});
    }
    const double span = hi - lo;
    const double floor = 64.0 * std::numeric_limits<double>::epsilon() * magnitude;
    if (!std::isfinite(span)) throw ConvergenceError("relative value iteration diverged", it, span);
    if (span < best_span) {
      best_span = span;
      since_best = 0;
    } else {
      ++since_best;
    }
    result.report = ConvergenceReport{it, span, lo, hi, floor, false};
    const double offset = w[opt.reference_state];
    for (std::size_t s = 0; s < n; ++s) h[s] = w[s] - offset;
    const bool converged = span < opt.tol;
    const bool stalled = !converged && since_best >= opt.stall_window && span <= floor;
    if (converged || stalled) {
      result.report.noise_limited = stalled;
      result.average_cost = 0.5 * (lo + hi);
      try {
        result.average_cost = evaluate_policy(mdp, actions);
      } catch (const ModelError&) {
      }
      result.actions = std::move(actions);
      result.values = std::move(h);
      return result;
    }
  }
  throw ConvergenceError("relative value iteration did not converge within " + std::to_string(opt.max_iters) +
                             " iterations (final span " + std::to_string(result.report.span) + ")",
                         opt.max_iters, result.report.span);
}

/// Violating pairs (lower state, higher state) of a monotone-threshold check.
template <class State>
struct SwitchingReport {
  bool pass = true;
  std::vector<std::pair<State, State>> violations;
};

/// A solved or constructed policy over a truncated state space.
template <class Space>
struct Policy {
  using State = typename Space::State;

  Space space;
  std::vector<Action> actions;  // indexed like space.states()
  CostMode cost_mode = CostMode::mse;
  double average_cost = std::numeric_limits<double>::quiet_NaN();
  ConvergenceReport report;

  Action action(std::size_t index) const { return actions.at(index); }
  Action action(const State& s) const { return actions.at(space.saturated_index(s)); }
  std::size_t count(Action a) const { return static_cast<std::size_t>(std::count(actions.begin(), actions.end(), a)); }
};

}  // namespace harqest
