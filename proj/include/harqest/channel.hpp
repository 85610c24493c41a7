#pragma once

// Static and finite-state Markov channels. A static channel is a one-state
// Markov channel. Channel indices are 0-based in code and 1-based in files.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "harqest/errors.hpp"
#include "harqest/history.hpp"
#include "harqest/numerics.hpp"
#include "harqest/random.hpp"

namespace harqest {

class MarkovChannel {
 public:
  /// `transition` is column-stochastic: entry (j, i) is the probability of
  /// moving from state i to state j.
  static MarkovChannel make(std::vector<double> gains, Matrix transition) {
    if (gains.empty()) throw ConfigError("channel needs at least one state");
    for (double g : gains) {
      if (!(g > 0.0) || !std::isfinite(g)) throw ConfigError("channel gains must be positive");
    }
    const auto b = static_cast<Eigen::Index>(gains.size());
    if (transition.rows() != b || transition.cols() != b) {
      throw ConfigError("transition matrix must be " + std::to_string(b) + "x" + std::to_string(b));
    }
    if (!is_column_stochastic(transition, 1e-12)) {
      throw ConfigError("transition matrix columns must be probability vectors (sum to 1 within 1e-12)");
    }
    if (transition.minCoeff() <= 0.0) throw ConfigError("all channel transition probabilities must be positive");
    return MarkovChannel(std::move(gains), std::move(transition));
  }

  static MarkovChannel static_gain(double gain) { return make({gain}, Matrix::Ones(1, 1)); }

  std::size_t size() const noexcept { return gains_.size(); }
  bool is_static() const noexcept { return gains_.size() == 1; }
  double gain(std::size_t i) const { return gains_.at(i); }
  const std::vector<double>& gains() const noexcept { return gains_; }
  const Matrix& transition_matrix() const noexcept { return transition_; }

  /// p_{from,to}
  double transition(std::size_t from, std::size_t to) const {
    return transition_(static_cast<Eigen::Index>(to), static_cast<Eigen::Index>(from));
  }

  Vector stationary() const { return stationary_distribution(transition_); }

 private:
  MarkovChannel(std::vector<double> gains, Matrix transition)
      : gains_(std::move(gains)), transition_(std::move(transition)) {}

  std::vector<double> gains_;
  Matrix transition_;
};

namespace detail {

inline std::size_t sample_categorical(const Vector& probabilities, double u) {
  double cumulative = 0.0;
  const auto n = static_cast<std::size_t>(probabilities.size());
  for (std::size_t j = 0; j + 1 < n; ++j) {
    cumulative += probabilities(static_cast<Eigen::Index>(j));
    if (u < cumulative) return j;
  }
  return n - 1;
}

}  // namespace detail

/// Draws the next channel index given the current one. Consumes exactly one
/// uniform from `rng`, even for a one-state channel.
inline std::size_t step(const MarkovChannel& ch, std::size_t current, RandomStream& rng) {
  if (current >= ch.size()) throw UsageError("channel index out of range");
  const double u = rng.uniform();
  return detail::sample_categorical(ch.transition_matrix().col(static_cast<Eigen::Index>(current)), u);
}

/// Buffered-attempt counter after the attempt made in channel state
/// `last_index`: reset to the unit vector after a new transmission, else
/// incremented.
inline HistoryCounter update_history(const HistoryCounter& omega, Action last_action, std::size_t last_index) {
  if (last_index >= omega.size()) throw UsageError("channel index out of range");
  if (last_action == Action::new_transmission) return HistoryCounter::unit(omega.size(), last_index);
  return omega.incremented(last_index);
}

}  // namespace harqest
