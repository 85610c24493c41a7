// Command-line front end: stability checks, policy solves, simulations and
// high-SNR threshold searches driven by a JSON config.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "harqest/config.hpp"
#include "harqest/io.hpp"
#include "harqest/mdp_markov.hpp"
#include "harqest/mdp_static.hpp"
#include "harqest/simulator.hpp"

namespace fs = std::filesystem;
using namespace harqest;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitConvergence = 3;
constexpr int kExitDivergence = 4;

struct Globals {
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> scheme;
};

// Everything derived from the config that several subcommands share.
struct Context {
  Config cfg;
  SteadyStateKalman kal;
  fs::path out;

  MarkovChannel channel() const { return cfg.channel.build(); }
  CostLadder ladder(std::size_t depth) const { return build_cost_ladder(cfg.system, kal, depth); }
  RviOptions rvi() const {
    RviOptions o;
    o.tol = cfg.solver.tol;
    o.max_iters = cfg.solver.max_iters;
    return o;
  }
};

HarqScheme parse_scheme(const std::string& s) {
  if (s == "CC") return HarqScheme::chase_combining;
  if (s == "IR") return HarqScheme::incremental_redundancy;
  throw ConfigError("--scheme: expected CC or IR");
}

CostMode parse_cost(const std::string& s) {
  if (s == "mse") return CostMode::mse;
  if (s == "delay") return CostMode::delay;
  throw ConfigError("--cost: expected mse or delay");
}

Context load(const Globals& g) {
  Config cfg = load_config(g.config_path);
  if (g.seed) cfg.sim.seed = *g.seed;
  if (g.scheme) cfg.harq.scheme = parse_scheme(*g.scheme);
  if (!cfg.system.is_trivial() && cfg.system.rho_sq() <= 1.0) {
    std::cerr << "warning: rho^2(A) <= 1, every policy has bounded cost\n";
  }
  auto kal = solve_steady_state(cfg.system);
  fs::path out = g.out_dir ? fs::path(*g.out_dir) : fs::path(cfg.output_dir);
  return Context{std::move(cfg), std::move(kal), std::move(out)};
}

json run_metadata(const Context& ctx) {
  return {{"scheme", to_string(ctx.cfg.harq.scheme)},
          {"snr_db", ctx.cfg.snr_db},
          {"blocklength", ctx.cfg.harq.blocklength},
          {"rate", ctx.cfg.harq.rate}};
}

void write_json(const fs::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
  std::cout << "wrote " << path.string() << "\n";
}

// ---------------------------------------------------------------------------

int cmd_stability(const Globals& g, int resolution) {
  const Context ctx = load(g);
  const auto ch = ctx.channel();
  const double rho_sq = ctx.cfg.system.rho_sq();
  json report = run_metadata(ctx);
  report["rho_sq_A"] = rho_sq;
  bool stable = false;
  if (ch.is_static()) {
    const auto worst = worst_retransmission_error_static(ctx.cfg.harq, ch.gain(0),
                                                         static_cast<std::size_t>(ctx.cfg.solver.r_max));
    const auto v = check_stability_static(worst.value, rho_sq);
    stable = v.stable;
    report["channel"] = "static";
    report["lambda_new"] = static_error_prob(ctx.cfg.harq, ch.gain(0), 1);
    report["lambda0"] = worst.value;
    report["product"] = v.product;
    report["stable"] = v.stable;
    std::cout << "Lambda'_0 = " << format_double(report["lambda_new"].get<double>()) << "\n"
              << "Lambda_0 = " << format_double(worst.value) << "\n"
              << "rho^2(A) = " << format_double(rho_sq) << "\n"
              << "product = " << format_double(v.product) << "\n";
  } else {
    int budget = 0;
    for (int c : ctx.cfg.solver.omega_caps) budget += c;
    std::vector<double> lambdas;
    std::vector<double> lambda_new;
    for (std::size_t i = 0; i < ch.size(); ++i) {
      lambdas.push_back(worst_retransmission_error_markov(ctx.cfg.harq, ch.gains(), i, budget).value);
      lambda_new.push_back(conditional_error_prob(ctx.cfg.harq, ch.gains(), HistoryCounter(ch.size()), i));
      std::cout << "Lambda'_" << i + 1 << " = " << format_double(lambda_new.back()) << "  Lambda_" << i + 1 << " = "
                << format_double(lambdas.back()) << "\n";
    }
    const auto v = check_stability_markov(ch.transition_matrix(), lambdas, rho_sq);
    stable = v.stable;
    report["channel"] = "markov";
    report["lambda_new"] = lambda_new;
    report["lambda"] = lambdas;
    report["product"] = v.product;
    report["stable"] = v.stable;
    std::cout << "rho^2(A) = " << format_double(rho_sq) << "\n"
              << "rho(Pi Lambda) rho^2(A) = " << format_double(v.product) << "\n";
    if (ch.size() == 2) {
      const auto cells = stability_region(ch.transition_matrix(), rho_sq, resolution);
      std::size_t count = 0;
      for (const auto& c : cells) count += c.stable ? 1 : 0;
      report["region_stable_cells"] = count;
      report["region_cells"] = cells.size();
      write_text(ctx.out / "stability_region.csv", stability_grid_csv(cells));
      std::cout << "wrote " << (ctx.out / "stability_region.csv").string() << "\n";
    }
  }
  std::cout << (stable ? "stable: product < 1" : "not certified: product >= 1") << "\n";
  write_json(ctx.out / "stability.json", report);
  return kExitOk;
}

// ---------------------------------------------------------------------------

std::vector<Action> solve_static_actions(const Context& ctx, CostMode mode, StaticPolicy* out) {
  const auto& s = ctx.cfg.solver;
  const auto ladder = ctx.ladder(static_cast<std::size_t>(s.q_max_static) + 2);
  const auto problem = build_static_mdp(
      ladder, ErrorProfile::from_model(ctx.cfg.harq, ctx.cfg.channel.static_gain, static_cast<std::size_t>(s.r_max)),
      s.r_max, s.q_max_static, mode);
  auto policy = solve_rvi(problem, ctx.rvi());
  if (mode == CostMode::delay) {
    // Report the MSE the delay-optimal table achieves, not its mean age.
    const auto mse_problem = build_static_mdp(
        ladder, ErrorProfile::from_model(ctx.cfg.harq, ctx.cfg.channel.static_gain, static_cast<std::size_t>(s.r_max)),
        s.r_max, s.q_max_static, CostMode::mse);
    policy.average_cost = tabulate(mse_problem, policy.actions).average_cost;
  }
  if (out) *out = policy;
  return policy.actions;
}

int cmd_solve(const Globals& g, const std::string& channel_kind, const std::string& cost) {
  const Context ctx = load(g);
  const CostMode mode = cost.empty() ? ctx.cfg.solver.cost_mode : parse_cost(cost);
  const bool want_static = channel_kind.empty() ? ctx.cfg.channel.is_static : channel_kind == "static";
  if (!channel_kind.empty() && channel_kind != "static" && channel_kind != "markov") {
    throw ConfigError("--channel: expected static or markov");
  }
  if (want_static != ctx.cfg.channel.is_static) {
    throw ConfigError(ctx.cfg.source + ": /channel: --channel " + channel_kind + " does not match the config");
  }
  const auto& s = ctx.cfg.solver;
  json extra = run_metadata(ctx);
  fs::path file = ctx.out / ("policy_" + std::string(want_static ? "static" : "markov") + "_" + to_string(mode) + ".json");
  bool pass = false;
  std::size_t violations = 0;
  if (want_static) {
    StaticPolicy policy;
    solve_static_actions(ctx, mode, &policy);
    const auto sw = verify_switching(policy);
    pass = sw.pass;
    violations = sw.violations.size();
    extra["mse_average_cost"] = policy.average_cost;
    write_json(file, policy_json(policy, extra));
    std::cout << "states = " << policy.space.size() << "  retransmit states = " << policy.count(Action::retransmit)
              << "\n"
              << "average MSE = " << format_double(policy.average_cost) << "\n"
              << "iterations = " << policy.report.iterations << "  span = " << format_double(policy.report.span)
              << (policy.report.noise_limited ? " (round-off floor)" : "") << "\n";
  } else {
    const auto ch = ctx.channel();
    const auto ladder = ctx.ladder(static_cast<std::size_t>(s.q_max_markov) + 2);
    const auto error = make_error_function(ctx.cfg.harq, ch.gains());
    const auto problem = build_markov_mdp(ladder, ch, error, s.omega_caps, s.q_max_markov, mode);
    auto policy = solve_rvi(problem, ctx.rvi());
    if (mode == CostMode::delay) {
      const auto mse_problem = build_markov_mdp(ladder, ch, error, s.omega_caps, s.q_max_markov, CostMode::mse);
      policy.average_cost = tabulate(mse_problem, policy.actions).average_cost;
    }
    const auto sw = verify_switching_markov(policy);
    pass = sw.pass;
    violations = sw.violations.size();
    extra["mse_average_cost"] = policy.average_cost;
    write_json(file, policy_json(policy, extra));
    std::cout << "states = " << policy.space.size() << "  retransmit states = " << policy.count(Action::retransmit)
              << "\n"
              << "average MSE = " << format_double(policy.average_cost) << "\n"
              << "iterations = " << policy.report.iterations << "  span = " << format_double(policy.report.span)
              << (policy.report.noise_limited ? " (round-off floor)" : "") << "\n";
  }
  std::cout << "switching structure: " << (pass ? "pass" : "FAIL") << " (" << violations << " violations)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

PolicySpec make_policy(const Context& ctx, const std::string& token) {
  if (token == "myopic") return {"myopic", Myopic{}};
  if (token == "no-retx") return {"no-retx", NoRetransmission{}};
  if (token == "psi") return {"psi", AlwaysRetransmit{}};
  if (token == "optimal" || token == "delay-optimal") {
    const CostMode mode = token == "optimal" ? CostMode::mse : CostMode::delay;
    const auto& s = ctx.cfg.solver;
    if (ctx.cfg.channel.is_static) {
      StaticPolicy p;
      solve_static_actions(ctx, mode, &p);
      return PolicySpec::table(token, std::move(p));
    }
    const auto ch = ctx.channel();
    const auto problem = build_markov_mdp(ctx.ladder(static_cast<std::size_t>(s.q_max_markov) + 2), ch,
                                          make_error_function(ctx.cfg.harq, ch.gains()), s.omega_caps,
                                          s.q_max_markov, mode);
    return PolicySpec::table(token, solve_rvi(problem, ctx.rvi()));
  }
  auto policy = read_policy(token);
  const auto name = fs::path(token).stem().string();
  return std::visit([&](auto&& p) { return PolicySpec::table(name, std::move(p)); }, std::move(policy));
}

int cmd_simulate(const Globals& g, const std::string& policy_token, const std::vector<std::string>& compare) {
  const Context ctx = load(g);
  if (policy_token.empty() == compare.empty()) throw ConfigError("give exactly one of --policy or --compare");
  const auto ch = ctx.channel();
  const auto sim = Simulator::from_models(ctx.cfg.system, ctx.kal, ctx.cfg.harq, ch, ctx.cfg.sim.slots);
  bool diverged = false;
  if (!policy_token.empty()) {
    const auto spec = make_policy(ctx, policy_token);
    auto cfg = ctx.cfg.sim;
    cfg.record_slots = true;
    const auto traces = sim.run_all(spec, cfg);
    for (const auto& t : traces) {
      const auto file = ctx.out / ("trace_" + spec.name + "_r" + std::to_string(t.replicate) + ".csv");
      write_text(file, trace_csv(t));
      std::cout << "replicate " << t.replicate << ": average MSE " << format_double(t.final_average) << " over "
                << t.completed << " slots" << (t.diverged ? "  DIVERGED at slot " + std::to_string(t.diverged_at) : "")
                << "\n";
      diverged = diverged || t.diverged;
    }
    std::cout << "wrote " << traces.size() << " trace file(s) under " << ctx.out.string() << "\n";
  } else {
    std::vector<PolicySpec> specs;
    for (const auto& tok : compare) specs.push_back(make_policy(ctx, tok));
    const auto table = evaluate_policies(sim, specs, ctx.cfg.sim);
    for (const auto& r : table.rows) {
      std::printf("%-16s mean %-14s stderr %-12s diverged %zu/%zu\n", r.name.c_str(), format_double(r.mean_final).c_str(),
                  format_double(r.std_error).c_str(), r.diverged, r.replicates);
      diverged = diverged || r.diverged > 0;
    }
    json j = comparison_json(table);
    j.update(run_metadata(ctx));
    write_json(ctx.out / "comparison.json", j);
    write_text(ctx.out / "trajectory.csv", trajectory_csv(table));
    std::cout << "wrote " << (ctx.out / "trajectory.csv").string() << "\n";
  }
  return diverged ? kExitDivergence : kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_highsnr(const Globals& g, int theta_max) {
  const Context ctx = load(g);
  const auto ch = ctx.channel();
  const auto ladder = ctx.ladder(static_cast<std::size_t>(theta_max) + 3);
  json report = run_metadata(ctx);
  std::vector<double> lambda_new;
  for (std::size_t i = 0; i < ch.size(); ++i) {
    lambda_new.push_back(conditional_error_prob(ctx.cfg.harq, ch.gains(), HistoryCounter(ch.size()), i));
  }
  report["lambda_new"] = lambda_new;
  if (ch.is_static()) {
    const auto r = high_snr_optimal_static(ladder, lambda_new[0], theta_max);
    report["theta"] = r.theta;
    report["average_cost"] = r.average_cost;
    report["cost_by_theta"] = r.cost_by_theta;
    std::cout << "theta* = " << r.theta << "\nzeta* = " << format_double(r.average_cost) << "\n";
  } else {
    const auto r = high_snr_markov(ladder, ch, lambda_new, theta_max);
    report["theta"] = r.theta;
    report["average_cost"] = r.average_cost;
    report["evaluated"] = r.evaluated;
    report["skipped"] = r.skipped;
    std::cout << "theta* = (";
    for (std::size_t i = 0; i < r.theta.size(); ++i) std::cout << (i ? "," : "") << r.theta[i];
    std::cout << ")\nzeta* = " << format_double(r.average_cost) << "\n";
  }
  write_json(ctx.out / "highsnr.json", report);
  return kExitOk;
}

// ---------------------------------------------------------------------------

// SNR x scheme grid: stability verdict, RVI-optimal MSE and switching check.
int cmd_sweep(const Globals& g, const std::vector<double>& snrs) {
  Context ctx = load(g);
  const auto ch = ctx.channel();
  const auto& s = ctx.cfg.solver;
  const double rho_sq = ctx.cfg.system.rho_sq();
  std::string csv = "snr_db,ir,product,stable,average_cost,iterations,switching_pass,violations\n";
  bool all_pass = true;
  for (double snr : snrs) {
    for (auto scheme : {HarqScheme::chase_combining, HarqScheme::incremental_redundancy}) {
      const auto harq = HarqModel::from_db(scheme, snr, ctx.cfg.harq.blocklength, ctx.cfg.harq.rate);
      double product = 0.0;
      double cost = 0.0;
      std::size_t iters = 0;
      bool pass = false;
      std::size_t violations = 0;
      if (ch.is_static()) {
        product = check_stability_static(
                      worst_retransmission_error_static(harq, ch.gain(0), static_cast<std::size_t>(s.r_max)).value,
                      rho_sq)
                      .product;
        const auto problem = build_static_mdp(ctx.cfg.system, ctx.kal, harq, ch.gain(0), s.r_max, s.q_max_static,
                                              s.cost_mode);
        const auto p = solve_rvi(problem, ctx.rvi());
        const auto sw = verify_switching(p);
        cost = p.average_cost;
        iters = p.report.iterations;
        pass = sw.pass;
        violations = sw.violations.size();
      } else {
        int budget = 0;
        for (int c : s.omega_caps) budget += c;
        std::vector<double> lambdas;
        for (std::size_t i = 0; i < ch.size(); ++i) {
          lambdas.push_back(worst_retransmission_error_markov(harq, ch.gains(), i, budget).value);
        }
        product = check_stability_markov(ch.transition_matrix(), lambdas, rho_sq).product;
        const auto problem =
            build_markov_mdp(ctx.cfg.system, ctx.kal, harq, ch, s.omega_caps, s.q_max_markov, s.cost_mode);
        const auto p = solve_rvi(problem, ctx.rvi());
        const auto sw = verify_switching_markov(p);
        cost = p.average_cost;
        iters = p.report.iterations;
        pass = sw.pass;
        violations = sw.violations.size();
      }
      all_pass = all_pass && pass;
      std::printf("snr %5s dB  %s  product %-12s  zeta %-14s  iters %4zu  switching %s\n", format_double(snr).c_str(),
                  to_string(scheme).c_str(), format_double(product).c_str(), format_double(cost).c_str(), iters,
                  pass ? "pass" : "FAIL");
      csv += format_double(snr) + "," + (scheme == HarqScheme::incremental_redundancy ? "1" : "0") + "," +
             format_double(product) + "," + (product < 1.0 ? "1" : "0") + "," + format_double(cost) + "," +
             std::to_string(iters) + "," + (pass ? "1" : "0") + "," + std::to_string(violations) + "\n";
    }
  }
  write_text(ctx.out / "sweep.csv", csv);
  std::cout << "wrote " << (ctx.out / "sweep.csv").string() << "\n";
  return all_pass ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HARQ-based remote estimation: stability, policy solving and simulation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON config file")->required()->check(CLI::ExistingFile);
  app.add_option("--out", g.out_dir, "output directory (overrides output.directory)");
  app.add_option("--seed", g.seed, "base seed (overrides sim.seed)");
  app.add_option("--scheme", g.scheme, "HARQ scheme override")->check(CLI::IsMember({"CC", "IR"}));

  int resolution = 50;
  auto* stability = app.add_subcommand("stability", "stability verdicts; Markov mode also writes the region grid");
  stability->add_option("--resolution", resolution, "grid cells per axis for the region sweep")
      ->check(CLI::Range(1, 10000));

  std::string channel_kind;
  std::string cost;
  auto* solve = app.add_subcommand("solve", "solve the scheduling MDP by relative value iteration");
  solve->add_option("--channel", channel_kind, "static or markov (default: from config)")
      ->check(CLI::IsMember({"static", "markov"}));
  solve->add_option("--cost", cost, "mse or delay (default: from config)")->check(CLI::IsMember({"mse", "delay"}));

  std::string policy_token;
  std::vector<std::string> compare;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo of the closed loop");
  simulate->add_option("--policy", policy_token, "policy file, myopic, no-retx, psi, optimal or delay-optimal");
  simulate->add_option("--compare", compare, "several policies, evaluated with common random numbers");

  int theta_max = 20;
  auto* highsnr = app.add_subcommand("highsnr", "threshold search with always-successful retransmissions");
  highsnr->add_option("--theta-max", theta_max, "largest threshold searched")->check(CLI::Range(1, 200));

  std::vector<double> snrs{5.0, 10.0, 15.0};
  auto* sweep = app.add_subcommand("sweep", "SNR x scheme grid of stability, optimal cost and switching checks");
  sweep->add_option("--snr-db", snrs, "SNR values in dB");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*stability) return cmd_stability(g, resolution);
    if (*solve) return cmd_solve(g, channel_kind, cost);
    if (*simulate) return cmd_simulate(g, policy_token, compare);
    if (*highsnr) return cmd_highsnr(g, theta_max);
    if (*sweep) return cmd_sweep(g, snrs);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ConvergenceError& e) {
    std::cerr << "convergence error: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const InstabilityError& e) {
    std::cerr << "convergence error: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
