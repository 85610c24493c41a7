#pragma once

// Seeded Monte Carlo of the closed loop. The receiver's error covariance is
// a deterministic function of the age of information, so each slot reads
// Tr(P_k) off the cost ladder instead of simulating x_k and y_k.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "harqest/channel.hpp"
#include "harqest/errors.hpp"
#include "harqest/harq_model.hpp"
#include "harqest/lti_estimation.hpp"
#include "harqest/mdp_markov.hpp"
#include "harqest/mdp_static.hpp"
#include "harqest/random.hpp"

namespace harqest {

struct NoRetransmission {};
/// Retransmit until delivery, then transmit fresh (a = 0 iff r = q).
struct AlwaysRetransmit {};
/// One-step lookahead, decided on the fly each slot.
struct Myopic {};
/// (1, q) retransmits iff q > theta[xi]; every other state transmits fresh.
struct Threshold {
  std::vector<int> theta;
};
struct StaticTable {
  std::shared_ptr<const StaticPolicy> policy;
};
struct MarkovTable {
  std::shared_ptr<const MarkovPolicy> policy;
};

using PolicyRule = std::variant<NoRetransmission, AlwaysRetransmit, Myopic, Threshold, StaticTable, MarkovTable>;

struct PolicySpec {
  std::string name;
  PolicyRule rule;

  static PolicySpec table(std::string name, StaticPolicy p) {
    return {std::move(name), StaticTable{std::make_shared<const StaticPolicy>(std::move(p))}};
  }
  static PolicySpec table(std::string name, MarkovPolicy p) {
    return {std::move(name), MarkovTable{std::make_shared<const MarkovPolicy>(std::move(p))}};
  }

  /// table, delay_optimal_table, myopic, no_retransmission,
  /// always_retransmit_psi or threshold.
  std::string kind() const {
    return std::visit(
        [](const auto& r) -> std::string {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, NoRetransmission>) return "no_retransmission";
          else if constexpr (std::is_same_v<T, AlwaysRetransmit>) return "always_retransmit_psi";
          else if constexpr (std::is_same_v<T, Myopic>) return "myopic";
          else if constexpr (std::is_same_v<T, Threshold>) return "threshold";
          else return r.policy->cost_mode == CostMode::delay ? "delay_optimal_table" : "table";
        },
        rule);
  }
};

struct SimConfig {
  std::size_t slots = 10000;
  std::size_t replicates = 1;
  std::uint64_t seed = 1;
  std::optional<std::size_t> initial_channel;  // default: drawn from the stationary law
  bool force_success_retransmissions = false;
  bool record_slots = true;     // per-slot records
  bool record_running = true;   // running-average trajectory
  std::size_t threads = 0;      // 0: hardware concurrency
};

struct SlotRecord {
  std::size_t k = 0;
  Action a = Action::new_transmission;
  bool gamma = false;
  int r = 1;
  int q = 1;
  std::size_t xi = 0;
  HistoryCounter omega;
  double trace_mse = 0.0;
  double running_avg = 0.0;
};

struct SimulationTrace {
  std::uint64_t seed = 0;
  std::size_t replicate = 0;
  std::vector<SlotRecord> slots;
  std::vector<double> running;  // running average after each completed slot
  std::size_t completed = 0;
  double final_average = 0.0;
  bool diverged = false;
  std::size_t diverged_at = 0;  // first slot whose age left the cost ladder
};

inline constexpr double kSimulationOverflowGuard = 1e150;

class Simulator {
 public:
  Simulator(CostLadder ladder, MarkovChannel channel, ErrorFunction error)
      : ladder_(std::move(ladder)), channel_(std::move(channel)), error_(std::move(error)) {
    if (ladder_.max_depth() < 2) throw UsageError("simulation ladder needs depth of at least 2");
    if (!error_) throw UsageError("simulation needs an error function");
  }

  /// Ladder deep enough for `slots` slots (the age grows by at most one per
  /// slot), cut short where the MSE would exceed the overflow guard.
  static Simulator from_models(const LtiSystem& sys, const SteadyStateKalman& kal, const HarqModel& harq,
                               const MarkovChannel& ch, std::size_t slots) {
    return Simulator(build_cost_ladder_guarded(sys, kal, slots + 2, kSimulationOverflowGuard), ch,
                     make_error_function(harq, ch.gains()));
  }

  const CostLadder& ladder() const noexcept { return ladder_; }
  const MarkovChannel& channel() const noexcept { return channel_; }
  const ErrorFunction& error() const noexcept { return error_; }

  SimulationTrace run(const PolicySpec& policy, const SimConfig& cfg, std::size_t replicate) const {
    validate(policy, cfg);
    const std::size_t b = channel_.size();
    RandomStream channel_rng(derive_seed(cfg.seed, replicate, StreamId::channel));
    RandomStream packet_rng(derive_seed(cfg.seed, replicate, StreamId::packet));
    std::size_t xi = 0;
    if (cfg.initial_channel) {
      xi = *cfg.initial_channel;
    } else if (b > 1) {
      RandomStream init_rng(derive_seed(cfg.seed, replicate, StreamId::initial));
      xi = detail::sample_categorical(channel_.stationary(), init_rng.uniform());
    }

    SimulationTrace trace;
    trace.seed = cfg.seed;
    trace.replicate = replicate;
    if (cfg.record_slots) trace.slots.reserve(cfg.slots);
    if (cfg.record_running) trace.running.reserve(cfg.slots);

    const bool myopic = std::holds_alternative<Myopic>(policy.rule);
    const HistoryCounter fresh(b);
    int r = 1;
    int q = 1;
    HistoryCounter omega = HistoryCounter::unit(b, xi);
    double average = 0.0;
    for (std::size_t k = 1; k <= cfg.slots; ++k) {
      const auto needed = static_cast<std::size_t>(q) + (myopic ? 1 : 0);
      if (needed > ladder_.max_depth()) {
        trace.diverged = true;
        trace.diverged_at = k;
        break;
      }
      const double cost = ladder_[static_cast<std::size_t>(q)];
      average += (cost - average) / static_cast<double>(k);

      const Action a = decide(policy, r, q, omega, xi);
      double p_fail = 0.0;
      if (a == Action::new_transmission) {
        p_fail = error_(fresh, xi);
      } else if (!cfg.force_success_retransmissions) {
        p_fail = error_(omega, xi);
      }
      const bool gamma = packet_rng.uniform() >= p_fail;

      if (cfg.record_slots) trace.slots.push_back({k, a, gamma, r, q, xi, omega, cost, average});
      if (cfg.record_running) trace.running.push_back(average);
      trace.completed = k;

      const int next_r = a == Action::new_transmission ? 1 : r + 1;
      if (gamma) {
        q = next_r;
      } else {
        q += 1;
      }
      r = next_r;
      omega = update_history(omega, a, xi);
      xi = step(channel_, xi, channel_rng);
    }
    trace.final_average = average;
    return trace;
  }

  /// All replicates, in replicate order. Replicates run on worker threads;
  /// each owns its random streams, so the result does not depend on the
  /// thread count.
  std::vector<SimulationTrace> run_all(const PolicySpec& policy, const SimConfig& cfg) const {
    validate(policy, cfg);
    std::vector<SimulationTrace> traces(cfg.replicates);
    std::size_t workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, cfg.replicates);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i = next++; i < cfg.replicates; i = next++) traces[i] = run(policy, cfg, i);
    };
    if (workers <= 1) {
      work();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    return traces;
  }

 private:
  void validate(const PolicySpec& policy, const SimConfig& cfg) const {
    if (cfg.slots < 1) throw ConfigError("simulation needs at least one slot");
    if (cfg.replicates < 1) throw ConfigError("simulation needs at least one replicate");
    if (cfg.initial_channel && *cfg.initial_channel >= channel_.size()) throw ConfigError("initial channel out of range");
    if (const auto* t = std::get_if<Threshold>(&policy.rule); t && t->theta.size() != channel_.size()) {
      throw ConfigError("threshold policy needs one threshold per channel state");
    }
    if (const auto* t = std::get_if<StaticTable>(&policy.rule)) {
      if (!t->policy || !channel_.is_static()) throw ConfigError("static policy table needs a static channel");
    }
    if (const auto* t = std::get_if<MarkovTable>(&policy.rule)) {
      if (!t->policy || t->policy->space.channel_states() != channel_.size()) {
        throw ConfigError("Markov policy table does not match the channel");
      }
    }
  }

  Action decide(const PolicySpec& policy, int r, int q, const HistoryCounter& omega, std::size_t xi) const {
    return std::visit(
        [&](const auto& rule) -> Action {
          using T = std::decay_t<decltype(rule)>;
          if constexpr (std::is_same_v<T, NoRetransmission>) {
            return Action::new_transmission;
          } else if constexpr (std::is_same_v<T, AlwaysRetransmit>) {
            return r == q ? Action::new_transmission : Action::retransmit;
          } else if constexpr (std::is_same_v<T, Myopic>) {
            return myopic_action(ladder_, error_(HistoryCounter(omega.size()), xi), error_(omega, xi), r, q);
          } else if constexpr (std::is_same_v<T, Threshold>) {
            return (r == 1 && q > rule.theta[xi]) ? Action::retransmit : Action::new_transmission;
          } else if constexpr (std::is_same_v<T, StaticTable>) {
            return rule.policy->action(StaticState{r, q});
          } else {
            return rule.policy->action(MarkovState{omega, q, xi});
          }
        },
        policy.rule);
  }

  CostLadder ladder_;
  MarkovChannel channel_;
  ErrorFunction error_;
};

inline SimulationTrace run(const LtiSystem& sys, const SteadyStateKalman& kal, const HarqModel& harq,
                           const MarkovChannel& ch, const PolicySpec& policy, const SimConfig& cfg,
                           std::size_t replicate = 0) {
  return Simulator::from_models(sys, kal, harq, ch, cfg.slots).run(policy, cfg, replicate);
}

struct PolicySummary {
  std::string name;
  std::string kind;
  std::size_t replicates = 0;
  double mean_final = 0.0;   // mean of final running averages
  double std_error = 0.0;    // standard error of that mean
  std::size_t diverged = 0;  // replicates that left the cost ladder
  std::vector<double> mean_trajectory;  // over non-diverged replicates
};

struct ComparisonTable {
  SimConfig config;
  std::vector<PolicySummary> rows;

  const PolicySummary& row(const std::string& name) const {
    for (const auto& r : rows) {
      if (r.name == name) return r;
    }
    throw UsageError("no policy named " + name);
  }
};

namespace detail {

inline std::pair<double, double> mean_and_std_error(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) mean += (xs[i] - mean) / static_cast<double>(i + 1);
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(xs.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

}  // namespace detail

/// Runs every policy on the same replicate seeds.
inline ComparisonTable evaluate_policies(const Simulator& sim, const std::vector<PolicySpec>& policies, SimConfig cfg) {
  cfg.record_slots = false;
  cfg.record_running = true;
  ComparisonTable table{cfg, {}};
  for (const auto& policy : policies) {
    const auto traces = sim.run_all(policy, cfg);
    PolicySummary row;
    row.name = policy.name;
    row.kind = policy.kind();
    row.replicates = traces.size();
    std::vector<double> finals;
    std::vector<double> sum(cfg.slots, 0.0);
    std::size_t alive = 0;
    for (const auto& t : traces) {
      finals.push_back(t.final_average);
      if (t.diverged) {
        ++row.diverged;
        continue;
      }
      ++alive;
      for (std::size_t k = 0; k < t.running.size(); ++k) sum[k] += t.running[k];
    }
    std::tie(row.mean_final, row.std_error) = detail::mean_and_std_error(finals);
    if (alive > 0) {
      row.mean_trajectory.resize(cfg.slots);
      for (std::size_t k = 0; k < cfg.slots; ++k) row.mean_trajectory[k] = sum[k] / static_cast<double>(alive);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

struct ClosedFormComparison {
  double empirical = 0.0;
  double std_error = 0.0;
  double closed_form = 0.0;
  double abs_diff = 0.0;
  double bound = 0.0;  // three standard errors
  bool within = false;
};

/// Long-run average of the threshold policy with always-successful
/// retransmissions versus the closed-form stationary cost.
inline ClosedFormComparison empirical_vs_closed_form(const Simulator& sim, const std::vector<int>& theta, SimConfig cfg) {
  cfg.force_success_retransmissions = true;
  cfg.record_slots = false;
  cfg.record_running = false;
  const auto& ch = sim.channel();
  std::vector<double> lambda_new;
  for (std::size_t i = 0; i < ch.size(); ++i) lambda_new.push_back(sim.error()(HistoryCounter(ch.size()), i));

  ClosedFormComparison out;
  if (ch.is_static()) {
    out.closed_form = high_snr_static_cost(sim.ladder(), lambda_new[0], theta.at(0));
  } else {
    out.closed_form = high_snr_chain_cost(build_high_snr_chain(sim.ladder(), ch.transition_matrix(), lambda_new, theta));
  }
  const auto traces = sim.run_all(PolicySpec{"threshold", Threshold{theta}}, cfg);
  std::vector<double> finals;
  for (const auto& t : traces) {
    if (t.diverged) throw UsageError("threshold run left the cost ladder");
    finals.push_back(t.final_average);
  }
  std::tie(out.empirical, out.std_error) = detail::mean_and_std_error(finals);
  out.abs_diff = std::abs(out.empirical - out.closed_form);
  out.bound = 3.0 * out.std_error;
  out.within = out.abs_diff <= out.bound;
  return out;
}

}  // namespace harqest
