#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "harqest/errors.hpp"

namespace harqest {

enum class Action : std::uint8_t { new_transmission = 0, retransmit = 1 };

inline constexpr int to_int(Action a) noexcept { return static_cast<int>(a); }

/// Per-channel-state counts of the attempts made so far for the message in
/// flight. The all-zero counter stands for "nothing buffered" (a new
/// transmission).
class HistoryCounter {
 public:
  HistoryCounter() = default;
  explicit HistoryCounter(std::size_t channel_states) : counts_(channel_states, 0) {}
  explicit HistoryCounter(std::vector<int> counts) : counts_(std::move(counts)) {
    for (int c : counts_) {
      if (c < 0) throw UsageError("history counts must be nonnegative");
    }
  }

  static HistoryCounter unit(std::size_t channel_states, std::size_t index) {
    HistoryCounter h(channel_states);
    h.counts_.at(index) = 1;
    return h;
  }

  std::size_t size() const noexcept { return counts_.size(); }
  int operator[](std::size_t i) const { return counts_[i]; }
  const std::vector<int>& counts() const noexcept { return counts_; }
  int total() const { return std::accumulate(counts_.begin(), counts_.end(), 0); }
  bool is_zero() const { return total() == 0; }

  HistoryCounter incremented(std::size_t index, int by = 1) const {
    HistoryCounter h = *this;
    h.counts_.at(index) += by;
    return h;
  }

  std::string to_string() const {
    std::string s;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(counts_[i]);
    }
    return s;
  }

  friend bool operator==(const HistoryCounter&, const HistoryCounter&) = default;
  friend auto operator<=>(const HistoryCounter&, const HistoryCounter&) = default;

 private:
  std::vector<int> counts_;
};

}  // namespace harqest
