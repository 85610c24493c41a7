#pragma once

// File formats: policy tables and comparison summaries as JSON, traces and
// grids as comma-separated text with a header row.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "harqest/errors.hpp"
#include "harqest/mdp_markov.hpp"
#include "harqest/mdp_static.hpp"
#include "harqest/simulator.hpp"

namespace harqest {

using json = nlohmann::json;

/// Shortest decimal form that reads back to the same double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

/// Strict numeric field parse: the whole field must be consumed.
inline double parse_double(std::string_view field) {
  if (field == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (field == "inf") return std::numeric_limits<double>::infinity();
  if (field == "-inf") return -std::numeric_limits<double>::infinity();
  double x = 0.0;
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, x);
  if (field.empty() || res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("not a number: '" + std::string(field) + "'");
  }
  return x;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Delimited text

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw UsageError("no column " + std::string(name));
  }
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

/// Reads comma-separated text: one header row, then rows of numbers with the
/// same field count. No quoting, no blank lines, LF line endings.
inline CsvTable parse_csv(std::string_view text, const std::string& source = "<csv>") {
  CsvTable table;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    const auto where = source + ":" + std::to_string(line_no) + ": ";
    if (line.empty()) throw ConfigError(where + "empty line");
    if (line.find('\r') != std::string_view::npos) throw ConfigError(where + "carriage return in line");
    const auto fields = detail::split_commas(line);
    if (line_no == 1) {
      for (auto f : fields) {
        if (f.empty()) throw ConfigError(where + "empty header field");
        table.header.emplace_back(f);
      }
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw ConfigError(where + "expected " + std::to_string(table.header.size()) + " fields, found " +
                        std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (auto f : fields) {
      try {
        row.push_back(parse_double(f));
      } catch (const ConfigError& e) {
        throw ConfigError(where + e.what());
      }
    }
    table.rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw ConfigError(source + ": missing header");
  return table;
}

inline CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path), path.string()); }

inline constexpr std::string_view kTraceHeader = "k,a,gamma,r,q,xi,trace_mse,running_avg";

/// One row per slot; xi is 1-based, gamma is 1 for a delivered packet.
inline std::string trace_csv(const SimulationTrace& trace) {
  std::string out(kTraceHeader);
  out += '\n';
  for (const auto& s : trace.slots) {
    out += std::to_string(s.k);
    out += ',';
    out += std::to_string(to_int(s.a));
    out += ',';
    out += s.gamma ? '1' : '0';
    out += ',';
    out += std::to_string(s.r);
    out += ',';
    out += std::to_string(s.q);
    out += ',';
    out += std::to_string(s.xi + 1);
    out += ',';
    out += format_double(s.trace_mse);
    out += ',';
    out += format_double(s.running_avg);
    out += '\n';
  }
  return out;
}

/// Header "k,<policy name>,...": mean running average per slot across
/// non-diverged replicates. Policies with no surviving replicate are left
/// out.
inline std::string trajectory_csv(const ComparisonTable& table) {
  std::vector<const PolicySummary*> cols;
  for (const auto& r : table.rows) {
    if (!r.mean_trajectory.empty()) cols.push_back(&r);
  }
  std::string out = "k";
  for (const auto* c : cols) out += "," + c->name;
  out += '\n';
  for (std::size_t k = 0; k < table.config.slots; ++k) {
    out += std::to_string(k + 1);
    for (const auto* c : cols) out += "," + format_double(c->mean_trajectory[k]);
    out += '\n';
  }
  return out;
}

/// Header "lambda1,lambda2,product,stable".
inline std::string stability_grid_csv(const std::vector<StabilityCell>& cells) {
  std::string out = "lambda1,lambda2,product,stable\n";
  for (const auto& c : cells) {
    out += format_double(c.lambda1) + "," + format_double(c.lambda2) + "," + format_double(c.product) + "," +
           (c.stable ? "1" : "0") + "\n";
  }
  return out;
}

inline json comparison_json(const ComparisonTable& table) {
  json rows = json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"name", r.name},
                    {"kind", r.kind},
                    {"replicates", r.replicates},
                    {"mean_final", r.mean_final},
                    {"std_error", r.std_error},
                    {"diverged", r.diverged}});
  }
  return {{"slots", table.config.slots},
          {"replicates", table.config.replicates},
          {"seed", table.config.seed},
          {"policies", rows}};
}

// ---------------------------------------------------------------------------
// Policy tables

namespace detail {

inline json policy_common(const ConvergenceReport& rep, CostMode mode, double cost) {
  return {{"cost_mode", to_string(mode)},
          {"average_cost", cost},
          {"iterations", rep.iterations},
          {"span", rep.span},
          {"noise_limited", rep.noise_limited}};
}

template <class Space>
json action_map(const Policy<Space>& p) {
  json actions = json::object();
  for (std::size_t i = 0; i < p.space.size(); ++i) actions[p.space.key(i)] = to_int(p.actions[i]);
  return actions;
}

template <class Space>
std::vector<Action> read_actions(const json& j, const Space& space) {
  if (!j.contains("actions") || !j["actions"].is_object()) throw ConfigError("/actions: expected an object");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < space.size(); ++i) index.emplace(space.key(i), i);
  std::vector<int> seen(space.size(), 0);
  std::vector<Action> actions(space.size(), Action::new_transmission);
  for (const auto& [key, value] : j["actions"].items()) {
    const auto it = index.find(key);
    if (it == index.end()) throw ConfigError("/actions/" + key + ": state outside the truncation");
    if (!value.is_number_integer() || (value.template get<int>() != 0 && value.template get<int>() != 1)) {
      throw ConfigError("/actions/" + key + ": action must be 0 or 1");
    }
    actions[it->second] = static_cast<Action>(value.template get<int>());
    seen[it->second] = 1;
  }
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (!seen[i]) throw ConfigError("/actions: missing state " + space.key(i));
  }
  return actions;
}

inline CostMode read_cost_mode(const json& j) {
  const auto m = j.value("cost_mode", std::string("mse"));
  if (m == "mse") return CostMode::mse;
  if (m == "delay") return CostMode::delay;
  throw ConfigError("/cost_mode: expected mse or delay");
}

inline ConvergenceReport read_report(const json& j) {
  ConvergenceReport rep;
  rep.iterations = j.value("iterations", std::size_t{0});
  rep.span = j.value("span", 0.0);
  rep.noise_limited = j.value("noise_limited", false);
  return rep;
}

}  // namespace detail

/// `extra` is merged into the top-level object (scheme, system summary, ...).
inline json policy_json(const StaticPolicy& p, const json& extra = json::object()) {
  json j = detail::policy_common(p.report, p.cost_mode, p.average_cost);
  j["channel"] = "static";
  j["truncation"] = {{"r_max", p.space.r_max()}, {"q_max", p.space.q_max()}};
  j["actions"] = detail::action_map(p);
  j.update(extra);
  return j;
}

inline json policy_json(const MarkovPolicy& p, const json& extra = json::object()) {
  json j = detail::policy_common(p.report, p.cost_mode, p.average_cost);
  j["channel"] = "markov";
  j["truncation"] = {{"omega_caps", p.space.caps()}, {"q_max", p.space.q_max()}};
  j["actions"] = detail::action_map(p);
  j.update(extra);
  return j;
}

using AnyPolicy = std::variant<StaticPolicy, MarkovPolicy>;

inline AnyPolicy policy_from_json(const json& j) {
  try {
    const auto channel = j.at("channel").get<std::string>();
    const auto& trunc = j.at("truncation");
    const double cost = j.contains("average_cost") && j["average_cost"].is_number() ? j["average_cost"].get<double>()
                                                                                   : std::numeric_limits<double>::quiet_NaN();
    if (channel == "static") {
      StaticStateSpace space(trunc.at("r_max").get<int>(), trunc.at("q_max").get<int>());
      auto actions = detail::read_actions(j, space);
      return StaticPolicy{std::move(space), std::move(actions), detail::read_cost_mode(j), cost, detail::read_report(j)};
    }
    if (channel == "markov") {
      MarkovStateSpace space(trunc.at("omega_caps").get<std::vector<int>>(), trunc.at("q_max").get<int>());
      auto actions = detail::read_actions(j, space);
      return MarkovPolicy{std::move(space), std::move(actions), detail::read_cost_mode(j), cost, detail::read_report(j)};
    }
    throw ConfigError("/channel: expected static or markov");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("policy file: ") + e.what());
  }
}

inline AnyPolicy read_policy(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return policy_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace harqest
