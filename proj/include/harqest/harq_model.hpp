#pragma once

// Finite-blocklength packet error probabilities for chase-combining (CC) and
// incremental-redundancy (IR) HARQ.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "harqest/errors.hpp"
#include "harqest/history.hpp"
#include "harqest/numerics.hpp"

namespace harqest {

enum class HarqScheme { chase_combining, incremental_redundancy };

inline std::string to_string(HarqScheme s) { return s == HarqScheme::chase_combining ? "CC" : "IR"; }

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

struct HarqModel {
  HarqScheme scheme = HarqScheme::chase_combining;
  double snr = 10.0;            // linear, at unit channel gain
  std::size_t blocklength = 100;  // symbols per packet (L)
  double rate = 4.0;            // bits per symbol (R)

  static HarqModel make(HarqScheme scheme, double snr_linear, std::size_t blocklength, double rate) {
    if (!(snr_linear > 0.0) || !std::isfinite(snr_linear)) throw ConfigError("SNR must be positive and finite");
    if (blocklength < 1) throw ConfigError("blocklength must be at least 1");
    if (!(rate > 0.0)) throw ConfigError("rate must be positive");
    return HarqModel{scheme, snr_linear, blocklength, rate};
  }
  static HarqModel from_db(HarqScheme scheme, double snr_db, std::size_t blocklength, double rate) {
    return make(scheme, db_to_linear(snr_db), blocklength, rate);
  }
};

/// Probability that a message is still undecoded after one attempt per entry
/// of `gains` (normal approximation of the finite-blocklength error rate).
/// CC combines the received SNRs, IR accumulates per-attempt mutual
/// information and dispersion.
inline double block_error_prob(const HarqModel& model, std::span<const double> gains) {
  if (gains.empty()) throw UsageError("block_error_prob: gain multiset is empty");
  for (double h : gains) {
    if (!(h > 0.0)) throw UsageError("block_error_prob: channel gains must be positive");
  }
  const double L = static_cast<double>(model.blocklength);
  const double sqrt_l = std::sqrt(L);
  double arg = 0.0;
  if (model.scheme == HarqScheme::chase_combining) {
    double combined = 0.0;
    for (double h : gains) combined += h * model.snr;
    const double capacity = std::log2(1.0 + combined);
    const double dispersion = std::sqrt(1.0 - 1.0 / ((1.0 + combined) * (1.0 + combined)));
    arg = sqrt_l * (capacity + std::log2(L) / L - model.rate) / (dispersion * std::numbers::log2e);
  } else {
    const double attempts = static_cast<double>(gains.size());
    double capacity = 0.0;
    double dispersion_sq = 0.0;
    for (double h : gains) {
      const double s = 1.0 + h * model.snr;
      capacity += std::log2(s);
      dispersion_sq += 1.0 - 1.0 / (s * s);
    }
    arg = sqrt_l * (capacity + std::log2(attempts * L) / L - model.rate) /
          (std::sqrt(dispersion_sq) * std::numbers::log2e);
  }
  return std::clamp(gaussian_q(arg), 0.0, 1.0);
}

inline constexpr double kNegligibleProbability = 1e-300;

namespace detail {

inline std::vector<double> expand_multiset(std::span<const double> gain_set, const std::vector<int>& counts) {
  std::vector<double> gains;
  for (std::size_t i = 0; i < counts.size(); ++i) gains.insert(gains.end(), counts[i], gain_set[i]);
  return gains;
}

inline void require_history_shape(std::span<const double> gain_set, const HistoryCounter& history,
                                  std::size_t current_index) {
  if (history.size() != gain_set.size()) throw UsageError("history counter does not match the gain set");
  if (current_index >= gain_set.size()) throw UsageError("channel index out of range");
}

}  // namespace detail

/// Error probability of the current attempt given the buffered history:
/// the single-attempt error for an empty history, otherwise
/// P[fail | history + current] / P[fail | history].
inline double conditional_error_prob(const HarqModel& model, std::span<const double> gain_set,
                                     const HistoryCounter& history, std::size_t current_index) {
  detail::require_history_shape(gain_set, history, current_index);
  const double current = gain_set[current_index];
  if (history.is_zero()) return block_error_prob(model, std::span<const double>(&current, 1));
  auto gains = detail::expand_multiset(gain_set, history.counts());
  const double before = block_error_prob(model, gains);
  if (before < kNegligibleProbability) return 0.0;
  gains.push_back(current);
  return std::clamp(block_error_prob(model, gains) / before, 0.0, 1.0);
}

/// g(r) on a static channel: error of the r-th consecutive attempt.
inline double static_error_prob(const HarqModel& model, double gain, std::size_t attempt) {
  if (attempt == 0) throw UsageError("attempt numbers start at 1");
  const double set[] = {gain};
  return conditional_error_prob(model, set, HistoryCounter(std::vector<int>{static_cast<int>(attempt - 1)}), 0);
}

/// g(1), ..., g(r_max) on a static channel.
class ErrorProfile {
 public:
  ErrorProfile() = default;
  explicit ErrorProfile(std::vector<double> g) : g_(std::move(g)) {
    for (double p : g_) {
      if (!(p >= 0.0 && p <= 1.0)) throw UsageError("error probabilities must lie in [0,1]");
    }
  }
  static ErrorProfile from_model(const HarqModel& model, double gain, std::size_t r_max) {
    std::vector<double> g;
    for (std::size_t r = 1; r <= r_max; ++r) g.push_back(static_error_prob(model, gain, r));
    return ErrorProfile(std::move(g));
  }

  /// g(r) for 1 <= r <= size().
  double operator()(std::size_t r) const { return g_.at(r - 1); }
  std::size_t size() const noexcept { return g_.size(); }
  const std::vector<double>& values() const noexcept { return g_; }

 private:
  std::vector<double> g_;
};

struct StaticWorstCase {
  double value = 0.0;           // Lambda_0
  std::size_t argmax = 0;       // attempt index r achieving it
  bool monotone_decreasing = true;
};

/// Lambda_0 = max over r in 2..r_max of g(r).
inline StaticWorstCase worst_retransmission_error_static(const HarqModel& model, double gain, std::size_t r_max) {
  if (r_max < 2) throw UsageError("worst_retransmission_error_static: r_max must be at least 2");
  StaticWorstCase out;
  double previous = static_error_prob(model, gain, 1);
  for (std::size_t r = 2; r <= r_max; ++r) {
    const double g = static_error_prob(model, gain, r);
    if (out.argmax == 0 || g > out.value) {
      out.value = g;
      out.argmax = r;
    }
    if (g > previous) out.monotone_decreasing = false;
    previous = g;
  }
  return out;
}

struct MarkovWorstCase {
  double value = 0.0;  // Lambda_i
  HistoryCounter argmax;
  bool attained_at_budget = false;  // the sup may lie beyond the scanned budget
};

/// Calls `visit` for every nonzero counter with total at most `budget`.
template <class Visitor>
void for_each_history(std::size_t channel_states, int budget, Visitor&& visit) {
  std::vector<int> counts(channel_states, 0);
  auto recurse = [&](auto&& self, std::size_t dim, int remaining) -> void {
    if (dim == channel_states) {
      if (remaining < budget) visit(HistoryCounter(counts));
      return;
    }
    for (int c = 0; c <= remaining; ++c) {
      counts[dim] = c;
      self(self, dim + 1, remaining - c);
    }
    counts[dim] = 0;
  };
  recurse(recurse, 0, budget);
}

/// Lambda_i = max over nonzero Omega with |Omega| <= budget of g~(Omega, i).
inline MarkovWorstCase worst_retransmission_error_markov(const HarqModel& model, std::span<const double> gain_set,
                                                        std::size_t index, int omega_budget) {
  if (omega_budget < 1) throw UsageError("omega budget must be at least 1");
  if (index >= gain_set.size()) throw UsageError("channel index out of range");
  MarkovWorstCase out;
  bool first = true;
  for_each_history(gain_set.size(), omega_budget, [&](const HistoryCounter& omega) {
    const double g = conditional_error_prob(model, gain_set, omega, index);
    if (first || g > out.value) {
      out.value = g;
      out.argmax = omega;
      first = false;
    }
  });
  out.attained_at_budget = out.argmax.total() == omega_budget;
  return out;
}

/// g~(Omega, xi) for a fixed gain set, memoized per attempt multiset. Safe for
/// concurrent use.
class PacketErrorTable {
 public:
  PacketErrorTable(HarqModel model, std::vector<double> gain_set)
      : model_(model), gains_(std::move(gain_set)) {
    if (gains_.empty()) throw UsageError("gain set is empty");
  }

  const HarqModel& model() const noexcept { return model_; }
  const std::vector<double>& gains() const noexcept { return gains_; }

  double operator()(const HistoryCounter& history, std::size_t current_index) const {
    detail::require_history_shape(gains_, history, current_index);
    if (history.is_zero()) return block_error(HistoryCounter::unit(gains_.size(), current_index).counts());
    const double before = block_error(history.counts());
    if (before < kNegligibleProbability) return 0.0;
    const double after = block_error(history.incremented(current_index).counts());
    return std::clamp(after / before, 0.0, 1.0);
  }

 private:
  double block_error(const std::vector<int>& counts) const {
    {
      std::shared_lock lock(mutex_);
      if (auto it = cache_.find(counts); it != cache_.end()) return it->second;
    }
    const double value = block_error_prob(model_, detail::expand_multiset(gains_, counts));
    std::unique_lock lock(mutex_);
    cache_.try_emplace(counts, value);
    return value;
  }

  HarqModel model_;
  std::vector<double> gains_;
  mutable std::shared_mutex mutex_;
  mutable std::map<std::vector<int>, double> cache_;
};

/// g~(Omega, xi): error probability of the attempt made in channel state xi
/// with buffered history Omega (all-zero Omega = new transmission).
using ErrorFunction = std::function<double(const HistoryCounter&, std::size_t)>;

inline ErrorFunction make_error_function(const HarqModel& model, std::vector<double> gain_set) {
  auto table = std::make_shared<const PacketErrorTable>(model, std::move(gain_set));
  return [table](const HistoryCounter& h, std::size_t xi) { return (*table)(h, xi); };
}

/// Static-channel error function backed by an explicit g(1..r_max) profile;
/// attempts beyond the profile reuse its last entry.
inline ErrorFunction make_error_function(const ErrorProfile& profile) {
  if (profile.size() == 0) throw UsageError("error profile is empty");
  return [profile](const HistoryCounter& h, std::size_t) {
    const auto attempt = static_cast<std::size_t>(h.total()) + 1;
    return profile(std::min(attempt, profile.size()));
  };
}

}  // namespace harqest
