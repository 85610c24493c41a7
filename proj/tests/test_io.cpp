#include <cmath>
#include <filesystem>
#include <limits>
#include <string>

#include <gtest/gtest.h>

#include "harqest/config.hpp"
#include "harqest/io.hpp"

using namespace harqest;

namespace {

const std::string kMinimal = R"({
  "system": {"A": [[2.4, 0.2], [0.2, 0.8]], "C": [[1, 1]], "Qw": [[1, 0], [0, 1]], "Qv": 1},
  "harq": {"scheme": "CC", "snr_db": 10, "blocklength": 100, "rate": 4},
  "channel": {"static": {"gain": 2}}
})";

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string patched(const std::string& from, const std::string& to) {
  std::string s = kMinimal;
  const auto pos = s.find(from);
  EXPECT_NE(pos, std::string::npos) << from;
  return s.replace(pos, from.size(), to);
}

CostLadder small_ladder() { return CostLadder({2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0}); }

}  // namespace

TEST(Numbers, RoundTripShortestForm) {
  for (double x : {0.1, 1.0 / 3.0, 15.88910219725344, 1e-300, -2.5e17, 0.0}) {
    EXPECT_EQ(parse_double(format_double(x)), x);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_TRUE(std::isnan(parse_double(format_double(std::numeric_limits<double>::quiet_NaN()))));
  EXPECT_EQ(parse_double("-inf"), -std::numeric_limits<double>::infinity());
  EXPECT_THROW(parse_double("1.5x"), ConfigError);
  EXPECT_THROW(parse_double(""), ConfigError);
  EXPECT_THROW(parse_double(" 1"), ConfigError);
}

TEST(Csv, ParsesWellFormedTable) {
  const auto t = parse_csv("a,b\n1,2.5\n3,-4\n");
  ASSERT_EQ(t.header.size(), 2u);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][t.column("b")], -4.0);
  EXPECT_THROW(t.column("c"), UsageError);
}

TEST(Csv, RejectsMalformedInput) {
  EXPECT_THROW(parse_csv("a,b\n1,2\n\n3,4\n"), ConfigError);
  EXPECT_THROW(parse_csv("a,b\r\n1,2\r\n"), ConfigError);
  EXPECT_THROW(parse_csv("a,b\n1,2,3\n"), ConfigError);
  EXPECT_THROW(parse_csv("a,b\n1,x\n"), ConfigError);
  EXPECT_THROW(parse_csv("a,,b\n"), ConfigError);
  EXPECT_THROW(parse_csv(""), ConfigError);
  try {
    parse_csv("a\n1\n2\nz\n", "f.csv");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("f.csv:4:"), std::string::npos) << e.what();
  }
}

TEST(Csv, TraceRoundTrip) {
  const Simulator sim(small_ladder(), MarkovChannel::static_gain(1.0),
                      [](const HistoryCounter& h, std::size_t) { return h.is_zero() ? 1.0 : 0.0; });
  SimConfig cfg;
  cfg.slots = 6;
  const auto trace = sim.run({"psi", AlwaysRetransmit{}}, cfg, 0);
  const auto t = parse_csv(trace_csv(trace));
  ASSERT_EQ(t.rows.size(), 6u);
  std::string header;
  for (const auto& h : t.header) header += (header.empty() ? "" : ",") + h;
  EXPECT_EQ(header, kTraceHeader);
  for (std::size_t k = 0; k < 6; ++k) {
    const auto& s = trace.slots[k];
    EXPECT_EQ(t.rows[k][t.column("k")], static_cast<double>(k + 1));
    EXPECT_EQ(t.rows[k][t.column("a")], to_int(s.a));
    EXPECT_EQ(t.rows[k][t.column("gamma")], s.gamma ? 1.0 : 0.0);
    EXPECT_EQ(t.rows[k][t.column("q")], s.q);
    EXPECT_EQ(t.rows[k][t.column("xi")], 1.0);
    EXPECT_EQ(t.rows[k][t.column("running_avg")], s.running_avg);
  }
}

TEST(PolicyFile, StaticRoundTrip) {
  const auto problem = build_static_mdp(small_ladder(), ErrorProfile({0.5, 0.2, 0.1}), 3, 6, CostMode::delay);
  const auto pol = solve_rvi(problem);
  const auto back = std::get<StaticPolicy>(policy_from_json(json::parse(policy_json(pol).dump())));
  EXPECT_EQ(back.space, pol.space);
  EXPECT_EQ(back.actions, pol.actions);
  EXPECT_EQ(back.cost_mode, CostMode::delay);
  EXPECT_EQ(back.average_cost, pol.average_cost);
  EXPECT_EQ(back.report.iterations, pol.report.iterations);
}

TEST(PolicyFile, MarkovRoundTripThroughDisk) {
  Matrix pi(2, 2);
  pi << 0.8, 0.5, 0.2, 0.5;
  const auto ch = MarkovChannel::make({2.0, 1.0}, pi);
  const ErrorFunction err = [](const HistoryCounter& h, std::size_t xi) {
    return (xi == 0 ? 0.3 : 0.6) * std::pow(0.2, h.total());
  };
  const auto problem = build_markov_mdp(small_ladder(), ch, err, {2, 1}, 5, CostMode::mse);
  const auto pol = solve_rvi(problem);
  const auto path = std::filesystem::temp_directory_path() / "harqest_test_policy" / "p.json";
  write_text(path, policy_json(pol).dump(2));
  const auto back = std::get<MarkovPolicy>(read_policy(path));
  EXPECT_EQ(back.space, pol.space);
  EXPECT_EQ(back.actions, pol.actions);
  std::filesystem::remove_all(path.parent_path());
}

TEST(PolicyFile, RejectsMissingOrUnknownStates) {
  const auto problem = build_static_mdp(small_ladder(), ErrorProfile({0.5, 0.2}), 2, 4, CostMode::mse);
  auto j = policy_json(no_retransmission_policy(problem));
  auto missing = j;
  missing["actions"].erase("1,1");
  EXPECT_THROW(policy_from_json(missing), ConfigError);
  auto unknown = j;
  unknown["actions"]["3,3"] = 0;
  EXPECT_THROW(policy_from_json(unknown), ConfigError);
  auto bad_action = j;
  bad_action["actions"]["1,2"] = 2;
  EXPECT_THROW(policy_from_json(bad_action), ConfigError);
  auto bad_channel = j;
  bad_channel["channel"] = "fading";
  EXPECT_THROW(policy_from_json(bad_channel), ConfigError);
}

TEST(Config, MinimalDefaults) {
  const auto cfg = parse_config(kMinimal, "cfg");
  EXPECT_TRUE(cfg.channel.is_static);
  EXPECT_EQ(cfg.channel.static_gain, 2.0);
  EXPECT_NEAR(cfg.harq.snr, 10.0, 1e-12);
  EXPECT_EQ(cfg.harq.blocklength, 100u);
  EXPECT_EQ(cfg.solver.r_max, 20);
  EXPECT_EQ(cfg.solver.q_max_markov, 10);
  EXPECT_EQ(cfg.sim.slots, 10000u);
  EXPECT_EQ(cfg.output_dir, "out");
  EXPECT_FALSE(cfg.sim.initial_channel.has_value());
}

TEST(Config, ShippedFilesLoad) {
  const std::filesystem::path dir = HARQEST_SOURCE_DIR;
  const auto s = load_config(dir / "config" / "reference_static.json");
  EXPECT_TRUE(s.channel.is_static);
  const auto m = load_config(dir / "config" / "reference_markov.json");
  ASSERT_FALSE(m.channel.is_static);
  EXPECT_EQ(m.channel.build().transition(0, 1), 0.2);
  EXPECT_EQ(m.solver.omega_caps, (std::vector<int>{4, 4}));
  EXPECT_EQ(m.sim.replicates, 20u);
}

TEST(Config, ErrorsCarryJsonPointer) {
  EXPECT_EQ(error_of(patched("\"rate\": 4", "\"rate\": 4, \"extra\": 1")), "cfg: /harq/extra: unknown field");
  EXPECT_EQ(error_of(patched("\"CC\"", "\"XX\"")), "cfg: /harq/scheme: expected \"CC\" or \"IR\"");
  EXPECT_EQ(error_of(patched("\"blocklength\": 100", "\"blocklength\": 0")), "cfg: /harq/blocklength: must be at least 1");
  EXPECT_EQ(error_of(patched("[[1, 1]]", "[[1, \"a\"]]")), "cfg: /system/C/0/1: expected a number");
  EXPECT_EQ(error_of(patched("[[1, 0], [0, 1]]", "[[1, 0], [0]]")), "cfg: /system/Qw/1: row length 1 differs from 2");
  EXPECT_EQ(error_of(patched("\"gain\": 2", "\"gain\": -2")), "cfg: /channel/static/gain: must be positive");
  EXPECT_NE(error_of(patched("{\"static\": {\"gain\": 2}}", "{}")).find("cfg: /channel: exactly one"),
            std::string::npos);
  EXPECT_EQ(error_of(patched("\"harq\"", "\"harq_x\"")), "cfg: /harq_x: unknown field");
}

TEST(Config, MarkovChannelChecks) {
  const std::string markov = "{\"markov\": {\"gains\": [2, 1], \"transition\": [[0.8, 0.3], [0.2, 0.8]]}}";
  const auto e = error_of(patched("{\"static\": {\"gain\": 2}}", markov));
  EXPECT_EQ(e.rfind("cfg: /channel: ", 0), 0u) << e;
  const std::string good = "{\"markov\": {\"gains\": [2, 1], \"transition\": [[0.8, 0.2], [0.2, 0.8]]}}";
  auto text = patched("{\"static\": {\"gain\": 2}}", good);
  text.insert(text.rfind('}'), ", \"solver\": {\"omega_caps\": [4]}");
  EXPECT_EQ(error_of(text), "cfg: /solver/omega_caps: needs one cap per channel state");
  text = patched("{\"static\": {\"gain\": 2}}", good);
  text.insert(text.rfind('}'), ", \"sim\": {\"initial_channel\": 3}");
  EXPECT_EQ(error_of(text), "cfg: /sim/initial_channel: channel states are numbered 1..2");
}

TEST(Config, SyntaxErrorReportsLineAndColumn) {
  const auto e = error_of("{\n  \"system\": ,\n}");
  EXPECT_EQ(e.rfind("cfg:2:", 0), 0u) << e;
}
