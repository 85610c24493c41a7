#pragma once

// Run configuration, read from a JSON document. Every validation failure
// names the offending field as a JSON pointer; syntax errors carry
// line:column.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "harqest/channel.hpp"
#include "harqest/errors.hpp"
#include "harqest/harq_model.hpp"
#include "harqest/io.hpp"
#include "harqest/lti_estimation.hpp"
#include "harqest/mdp.hpp"

namespace harqest {

struct SolverConfig {
  int r_max = 20;
  int q_max_static = 20;
  std::vector<int> omega_caps{4, 4};
  int q_max_markov = 10;
  double tol = 1e-9;
  std::size_t max_iters = 100000;
  CostMode cost_mode = CostMode::mse;
};

struct ChannelConfig {
  bool is_static = true;
  double static_gain = 2.0;
  std::vector<double> gains;
  Matrix transition;

  MarkovChannel build() const {
    return is_static ? MarkovChannel::static_gain(static_gain) : MarkovChannel::make(gains, transition);
  }
};

struct Config {
  Config(std::string src, LtiSystem sys) : source(std::move(src)), system(std::move(sys)) {}

  std::string source;
  LtiSystem system;
  HarqModel harq;  // SNR already linear
  double snr_db = 10.0;
  ChannelConfig channel;
  SolverConfig solver;
  SimConfig sim;
  std::string output_dir = "out";
};

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& pointer, const std::string& message) const {
    throw ConfigError(source_ + ": " + (pointer.empty() ? "/" : pointer) + ": " + message);
  }

  const json& object(const json& parent, const std::string& pointer, const std::set<std::string>& allowed) const {
    const json& j = parent;
    if (!j.is_object()) fail(pointer, "expected an object");
    for (const auto& [key, _] : j.items()) {
      if (!allowed.count(key)) fail(pointer + "/" + key, "unknown field");
    }
    return j;
  }

  const json& field(const json& obj, const std::string& pointer, const std::string& key) const {
    if (!obj.contains(key)) fail(pointer + "/" + key, "missing required field");
    return obj[key];
  }

  double number(const json& j, const std::string& pointer) const {
    if (!j.is_number()) fail(pointer, "expected a number");
    const double x = j.get<double>();
    if (!std::isfinite(x)) fail(pointer, "expected a finite number");
    return x;
  }

  double positive(const json& j, const std::string& pointer) const {
    const double x = number(j, pointer);
    if (!(x > 0.0)) fail(pointer, "must be positive");
    return x;
  }

  std::int64_t integer(const json& j, const std::string& pointer, std::int64_t min) const {
    if (!j.is_number_integer()) fail(pointer, "expected an integer");
    const auto x = j.get<std::int64_t>();
    if (x < min) fail(pointer, "must be at least " + std::to_string(min));
    return x;
  }

  std::string string(const json& j, const std::string& pointer) const {
    if (!j.is_string()) fail(pointer, "expected a string");
    return j.get<std::string>();
  }

  /// A matrix is a list of equal-length rows; a bare number is 1x1.
  Matrix matrix(const json& j, const std::string& pointer) const {
    if (j.is_number()) return Matrix::Constant(1, 1, number(j, pointer));
    if (!j.is_array() || j.empty()) fail(pointer, "expected a non-empty list of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    Eigen::Index cols = -1;
    Matrix m;
    for (Eigen::Index i = 0; i < rows; ++i) {
      const auto& row = j[static_cast<std::size_t>(i)];
      const auto rp = pointer + "/" + std::to_string(i);
      if (!row.is_array() || row.empty()) fail(rp, "expected a non-empty row");
      if (cols < 0) {
        cols = static_cast<Eigen::Index>(row.size());
        m.resize(rows, cols);
      } else if (static_cast<Eigen::Index>(row.size()) != cols) {
        fail(rp, "row length " + std::to_string(row.size()) + " differs from " + std::to_string(cols));
      }
      for (Eigen::Index c = 0; c < cols; ++c) {
        m(i, c) = number(row[static_cast<std::size_t>(c)], rp + "/" + std::to_string(c));
      }
    }
    return m;
  }

  template <class T>
  std::vector<T> list(const json& j, const std::string& pointer, auto&& element) const {
    if (!j.is_array() || j.empty()) fail(pointer, "expected a non-empty list");
    std::vector<T> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(element(j[i], pointer + "/" + std::to_string(i)));
    return out;
  }

 private:
  std::string source_;
};

inline std::string line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return std::to_string(line) + ":" + std::to_string(col);
}

}  // namespace detail

inline Config parse_config(const std::string& text, const std::string& source = "<config>") {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ":" + detail::line_column(text, e.byte) + ": syntax error: " + e.what());
  }
  const detail::ConfigReader rd(source);
  rd.object(root, "", {"system", "harq", "channel", "solver", "sim", "output"});

  auto system = [&] {
    const std::string p = "/system";
    const auto& s = rd.object(rd.field(root, "", "system"), p, {"A", "C", "Qw", "Qv", "Sigma0"});
    const Matrix A = rd.matrix(rd.field(s, p, "A"), p + "/A");
    const Matrix C = rd.matrix(rd.field(s, p, "C"), p + "/C");
    const Matrix Qw = rd.matrix(rd.field(s, p, "Qw"), p + "/Qw");
    const Matrix Qv = rd.matrix(rd.field(s, p, "Qv"), p + "/Qv");
    std::optional<Matrix> sigma0;
    if (s.contains("Sigma0")) sigma0 = rd.matrix(s["Sigma0"], p + "/Sigma0");
    try {
      return LtiSystem::make(A, C, Qw, Qv, sigma0);
    } catch (const Error& e) {
      rd.fail(p, e.what());
    }
  }();
  Config cfg(source, std::move(system));

  {
    const std::string p = "/harq";
    const auto& h = rd.object(rd.field(root, "", "harq"), p, {"scheme", "snr_db", "blocklength", "rate"});
    const auto scheme = rd.string(rd.field(h, p, "scheme"), p + "/scheme");
    HarqScheme sch;
    if (scheme == "CC") {
      sch = HarqScheme::chase_combining;
    } else if (scheme == "IR") {
      sch = HarqScheme::incremental_redundancy;
    } else {
      rd.fail(p + "/scheme", "expected \"CC\" or \"IR\"");
    }
    cfg.snr_db = rd.number(rd.field(h, p, "snr_db"), p + "/snr_db");
    const auto l = rd.integer(rd.field(h, p, "blocklength"), p + "/blocklength", 1);
    const double rate = rd.positive(rd.field(h, p, "rate"), p + "/rate");
    try {
      cfg.harq = HarqModel::from_db(sch, cfg.snr_db, static_cast<std::size_t>(l), rate);
    } catch (const Error& e) {
      rd.fail(p, e.what());
    }
  }

  {
    const std::string p = "/channel";
    const auto& c = rd.object(rd.field(root, "", "channel"), p, {"static", "markov"});
    if (c.contains("static") == c.contains("markov")) rd.fail(p, "exactly one of \"static\" or \"markov\" is required");
    if (c.contains("static")) {
      const auto sp = p + "/static";
      const auto& s = rd.object(c["static"], sp, {"gain"});
      cfg.channel.is_static = true;
      cfg.channel.static_gain = rd.positive(rd.field(s, sp, "gain"), sp + "/gain");
    } else {
      const auto mp = p + "/markov";
      const auto& m = rd.object(c["markov"], mp, {"gains", "transition"});
      cfg.channel.is_static = false;
      cfg.channel.gains = rd.list<double>(rd.field(m, mp, "gains"), mp + "/gains",
                                          [&](const json& e, const std::string& ep) { return rd.positive(e, ep); });
      cfg.channel.transition = rd.matrix(rd.field(m, mp, "transition"), mp + "/transition");
    }
    try {
      (void)cfg.channel.build();
    } catch (const Error& e) {
      rd.fail(p, e.what());
    }
  }

  if (root.contains("solver")) {
    const std::string p = "/solver";
    const auto& s = rd.object(root["solver"], p, {"r_max", "q_max_static", "omega_caps", "q_max_markov", "tol",
                                                  "max_iters", "cost_mode"});
    auto& sc = cfg.solver;
    if (s.contains("r_max")) sc.r_max = static_cast<int>(rd.integer(s["r_max"], p + "/r_max", 2));
    if (s.contains("q_max_static")) sc.q_max_static = static_cast<int>(rd.integer(s["q_max_static"], p + "/q_max_static", 2));
    if (sc.q_max_static < sc.r_max) rd.fail(p + "/q_max_static", "must be at least r_max");
    if (s.contains("omega_caps")) {
      sc.omega_caps = rd.list<int>(s["omega_caps"], p + "/omega_caps", [&](const json& e, const std::string& ep) {
        return static_cast<int>(rd.integer(e, ep, 1));
      });
    }
    if (s.contains("q_max_markov")) sc.q_max_markov = static_cast<int>(rd.integer(s["q_max_markov"], p + "/q_max_markov", 2));
    if (s.contains("tol")) sc.tol = rd.positive(s["tol"], p + "/tol");
    if (s.contains("max_iters")) sc.max_iters = static_cast<std::size_t>(rd.integer(s["max_iters"], p + "/max_iters", 1));
    if (s.contains("cost_mode")) {
      const auto m = rd.string(s["cost_mode"], p + "/cost_mode");
      if (m == "mse") {
        sc.cost_mode = CostMode::mse;
      } else if (m == "delay") {
        sc.cost_mode = CostMode::delay;
      } else {
        rd.fail(p + "/cost_mode", "expected \"mse\" or \"delay\"");
      }
    }
  }
  if (!cfg.channel.is_static) {
    if (cfg.solver.omega_caps.size() != cfg.channel.gains.size()) {
      rd.fail("/solver/omega_caps", "needs one cap per channel state");
    }
    int total = 0;
    for (int c : cfg.solver.omega_caps) total += c;
    if (cfg.solver.q_max_markov < total + 1) rd.fail("/solver/q_max_markov", "must exceed the sum of omega_caps");
  }

  if (root.contains("sim")) {
    const std::string p = "/sim";
    const auto& s = rd.object(root["sim"], p, {"slots", "replicates", "seed", "initial_channel"});
    if (s.contains("slots")) cfg.sim.slots = static_cast<std::size_t>(rd.integer(s["slots"], p + "/slots", 1));
    if (s.contains("replicates")) {
      cfg.sim.replicates = static_cast<std::size_t>(rd.integer(s["replicates"], p + "/replicates", 1));
    }
    if (s.contains("seed")) cfg.sim.seed = static_cast<std::uint64_t>(rd.integer(s["seed"], p + "/seed", 0));
    if (s.contains("initial_channel")) {
      const auto ic = rd.integer(s["initial_channel"], p + "/initial_channel", 1);
      const auto b = cfg.channel.is_static ? 1 : static_cast<std::int64_t>(cfg.channel.gains.size());
      if (ic > b) rd.fail(p + "/initial_channel", "channel states are numbered 1.." + std::to_string(b));
      cfg.sim.initial_channel = static_cast<std::size_t>(ic - 1);
    }
  }

  if (root.contains("output")) {
    const std::string p = "/output";
    const auto& o = rd.object(root["output"], p, {"directory"});
    if (o.contains("directory")) cfg.output_dir = rd.string(o["directory"], p + "/directory");
  }
  return cfg;
}

inline Config load_config(const std::filesystem::path& path) {
  return parse_config(read_text(path), path.string());
}

}  // namespace harqest
