// Command-line front end: check, solve, simulate, compare, export.
//
// Exit codes: 0 success, 1 domain failure (infeasible, non-convergent), 2 input failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sensched/sensched.hpp"

namespace fs = std::filesystem;
using namespace sensched;
using io::json;

namespace {

struct CommonOptions {
  std::string scenario;
  std::string out;
  std::optional<int> tau_max;
  std::optional<double> epsilon;
  std::optional<int> seeds;
  std::optional<long> horizon;
};

io::Scenario load(const CommonOptions& opt) {
  io::Scenario sc = io::load_scenario(opt.scenario);
  if (opt.tau_max) sc.problem.tau_max = *opt.tau_max;
  if (opt.epsilon) sc.problem.epsilon = *opt.epsilon;
  if (opt.horizon) sc.horizon = *opt.horizon;
  if (opt.seeds) {
    sc.seeds.clear();
    for (int s = 1; s <= *opt.seeds; ++s) sc.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (!opt.out.empty()) sc.out_dir = opt.out;
  try {
    sc.problem.validate();
  } catch (const std::invalid_argument& e) {
    throw io::InputError(e.what());
  }
  if (sc.horizon < 1) throw io::InputError("horizon must be >= 1");
  if (sc.seeds.empty()) throw io::InputError("at least one seed is required");
  // Overrides feed the hash so outputs stay tied to the effective configuration.
  sc.raw["effective_problem"] = io::problem_to_json(sc.problem);
  sc.raw["effective_horizon"] = sc.horizon;
  sc.raw["effective_seeds"] = sc.seeds;
  return sc;
}

void add_common(CLI::App* cmd, CommonOptions& opt, bool sim_flags) {
  cmd->add_option("--scenario", opt.scenario, "scenario JSON file")->required();
  cmd->add_option("--out", opt.out, "output directory (default: scenario 'out')");
  cmd->add_option("--tau-max", opt.tau_max, "age truncation cap");
  cmd->add_option("--epsilon", opt.epsilon, "relative value iteration tolerance");
  if (sim_flags) {
    cmd->add_option("--seeds", opt.seeds, "number of seeds (1..n)");
    cmd->add_option("--horizon", opt.horizon, "steps per episode");
  }
}

std::string three(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

int cmd_check(const CommonOptions& opt) {
  const io::Scenario sc = load(opt);
  const double lambda = *std::min_element(sc.problem.lambda.begin(), sc.problem.lambda.end());
  const FeasibilityReport f = check_feasibility(sc.model, lambda, sc.problem.M);
  std::cout << "scenario " << sc.name << ": N=" << sc.model.N << " M=" << sc.problem.M
            << " lambda=" << lambda << " rho(U)=" << three(f.rho) << " r=" << f.r << "\n";
  const auto t = tilde_matrices(sc.model);
  const bool detectable = is_detectable(t.A_tilde, sc.model.C);
  std::cout << "detectability of (C, A~): " << (detectable ? "detectable" : "NOT detectable")
            << "\n";
  if (detectable) {
    try {
      const CouplingBoundReport cb = check_coupling_bound(sc.model, sc.z);
      std::cout << "coupling bound (z=" << sc.z << "): ||G||_2 = " << three(cb.g_norm)
                << (cb.holds ? " <= " : " > ") << three(cb.bound) << ": "
                << (cb.holds ? "HOLDS" : "DOES NOT HOLD") << "\n";
    } catch (const std::exception& e) {
      std::cout << "coupling bound: not available (" << e.what() << ")\n";
    }
  }
  std::cout << "feasibility value " << three(f.value) << (f.feasible ? " < 1: FEASIBLE" : " >= 1: INFEASIBLE")
            << "\n";
  return f.feasible ? 0 : 1;
}

int cmd_solve(const CommonOptions& opt, const std::string& method) {
  const io::Scenario sc = load(opt);
  const double lambda = *std::min_element(sc.problem.lambda.begin(), sc.problem.lambda.end());
  const FeasibilityReport f = check_feasibility(sc.model, lambda, sc.problem.M);
  if (!f.feasible)
    std::cerr << "warning: feasibility value " << three(f.value)
              << " >= 1; solving the truncated problem anyway\n";
  const SteadyState steady = solve_steady_state(sc.model);
  const SchedulingMdp mdp(sc.model, steady, sc.problem);

  std::optional<SolveResult> modified, brute;
  if (method == "modified" || method == "both") modified = solve_rvi_modified(mdp);
  if (method == "bruteforce" || method == "both") brute = solve_rvi_bruteforce(mdp);
  const SolveResult& primary = modified ? *modified : *brute;

  fs::create_directories(sc.out_dir);
  io::write_text(sc.out_dir / "policy.csv", io::policy_csv(primary.policy));
  io::write_text(sc.out_dir / "values.csv", io::values_csv(primary));
  json meta = io::solve_meta_json(primary.policy);
  meta["config_hash"] = io::config_hash(sc.raw);
  meta["N"] = sc.model.N;
  meta["M"] = sc.problem.M;
  meta["tau_max"] = sc.problem.tau_max;
  meta["epsilon"] = sc.problem.epsilon;
  meta["bellman_residual"] = bellman_residual(mdp, primary);
  if (modified && brute) meta["bruteforce"] = io::solve_meta_json(brute->policy);
  io::write_text(sc.out_dir / "solve_meta.json", meta.dump(2) + "\n");

  std::cout << primary.policy.meta.method << ": " << primary.policy.meta.iterations
            << " sweeps, step8=" << primary.policy.meta.step8_count
            << ", J*=" << three(primary.policy.meta.j_star) << "\n";
  if (modified && brute) {
    const bool same = modified->policy.choice == brute->policy.choice;
    double gap = 0.0;
    for (std::size_t i = 0; i < modified->values.values.size(); ++i)
      gap = std::max(gap, std::abs(modified->values.values[i] - brute->values.values[i]));
    const bool fewer = modified->policy.meta.step8_count < brute->policy.meta.step8_count;
    std::ostringstream txt;
    txt << "policies identical: " << (same ? "true" : "false")
        << "; step8 modified < brute: " << (fewer ? "true" : "false") << "\n";
    json eq{{"policies_identical", same},
            {"max_value_gap", gap},
            {"step8_modified", modified->policy.meta.step8_count},
            {"step8_bruteforce", brute->policy.meta.step8_count},
            {"step8_modified_less", fewer}};
    io::write_text(sc.out_dir / "equivalence.txt", txt.str());
    io::write_text(sc.out_dir / "equivalence.json", eq.dump(2) + "\n");
    std::cout << txt.str();
  }
  return 0;
}

std::unique_ptr<Scheduler> make_scheduler(const std::string& kind, const io::Scenario& sc,
                                          const std::string& policy_file) {
  const int N = sc.model.N, M = sc.problem.M;
  if (kind == "optimal") {
    const fs::path path = policy_file.empty() ? sc.out_dir / "policy.csv" : fs::path(policy_file);
    if (!fs::exists(path))
      throw io::InputError("missing solved policy " + path.string() + "; run solve first");
    return std::make_unique<PolicyScheduler>(io::policy_from_csv(path, sc.problem));
  }
  if (kind == "round_robin") return baseline_policy(BaselineKind::round_robin, N, M);
  if (kind == "modified_round_robin")
    return baseline_policy(BaselineKind::modified_round_robin, N, M);
  if (kind == "random") return baseline_policy(BaselineKind::random, N, M);
  throw io::InputError("unknown policy '" + kind + "'");
}

EpisodeConfig episode_config(const io::Scenario& sc) {
  EpisodeConfig cfg;
  cfg.problem = sc.problem;
  cfg.horizon = sc.horizon;
  cfg.x0 = sc.x0;
  cfg.record_states = false;
  return cfg;
}

json summary_json(const EnsembleSummary& s) {
  return json{{"policy", s.scheduler}, {"mean", s.mean},       {"ci_low", s.ci_low()},
              {"ci_high", s.ci_high()}, {"stddev", s.stddev}, {"seeds", s.seeds},
              {"javg", s.javg}};
}

int cmd_simulate(const CommonOptions& opt, const std::string& kind, const std::string& policy_file) {
  const io::Scenario sc = load(opt);
  auto scheduler = make_scheduler(kind, sc, policy_file);
  const IndexCache cache(sc.model, solve_steady_state(sc.model));
  const fs::path dir = sc.out_dir / "simulate";
  auto sink = [&](const SimTrace& t) {
    io::write_text(dir / (t.scheduler + "_seed" + std::to_string(t.seed) + ".csv"), io::trace_csv(t));
  };
  const EnsembleSummary s = run_ensemble(cache, *scheduler, episode_config(sc), sc.seeds, sink);
  json j = summary_json(s);
  j["J_AVG"] = s.mean;
  j["horizon"] = sc.horizon;
  j["config_hash"] = io::config_hash(sc.raw);
  io::write_text(dir / (s.scheduler + "_summary.json"), j.dump(2) + "\n");
  std::cout << s.scheduler << ": J_AVG " << three(s.mean) << " [" << three(s.ci_low()) << ", "
            << three(s.ci_high()) << "] over " << s.seeds.size() << " seeds\n";
  return 0;
}

int cmd_compare(const CommonOptions& opt, const std::string& policies, const std::string& policy_file) {
  const io::Scenario sc = load(opt);
  std::vector<std::unique_ptr<Scheduler>> schedulers;
  std::stringstream ss(policies);
  std::string kind;
  while (std::getline(ss, kind, ','))
    if (!kind.empty()) schedulers.push_back(make_scheduler(kind, sc, policy_file));
  if (schedulers.empty()) throw io::InputError("no policies requested");

  const IndexCache cache(sc.model, solve_steady_state(sc.model));
  const fs::path dir = sc.out_dir / "traces";
  std::vector<EnsembleSummary> rows;
  json all = json::array();
  for (const auto& sched : schedulers) {
    auto sink = [&](const SimTrace& t) {
      io::write_text(dir / (t.scheduler + "_seed" + std::to_string(t.seed) + ".csv"),
                     io::trace_csv(t));
    };
    rows.push_back(run_ensemble(cache, *sched, episode_config(sc), sc.seeds, sink));
    all.push_back(summary_json(rows.back()));
    std::cout << rows.back().scheduler << ": J_AVG " << three(rows.back().mean) << " ["
              << three(rows.back().ci_low()) << ", " << three(rows.back().ci_high()) << "]\n";
  }
  io::write_text(sc.out_dir / "javg_summary.csv", io::javg_summary_csv(rows));
  json j{{"policies", all}, {"horizon", sc.horizon}, {"config_hash", io::config_hash(sc.raw)}};
  io::write_text(sc.out_dir / "compare_summary.json", j.dump(2) + "\n");
  return 0;
}

int cmd_export(const CommonOptions& opt) {
  const io::Scenario sc = load(opt);
  const SteadyState steady = solve_steady_state(sc.model);
  const SchedulingMdp mdp(sc.model, steady, sc.problem);
  io::write_text(sc.out_dir / "steady_state.json", io::steady_state_json(steady).dump(2) + "\n");
  io::write_text(sc.out_dir / "rewards.csv", io::rewards_csv(mdp));
  io::write_text(sc.out_dir / "model.json", io::model_to_json(sc.model).dump(2) + "\n");
  io::write_text(sc.out_dir / "problem.json", io::problem_to_json(sc.problem).dump(2) + "\n");
  std::cout << "exported steady state, reward table (" << mdp.lattice().size()
            << " states), model and problem to " << sc.out_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal sensor scheduling for distributed estimation over coupled networks"};
  app.require_subcommand(1);

  CommonOptions check_opt, solve_opt, sim_opt, cmp_opt, exp_opt;
  std::string method = "modified", sim_policy = "optimal", policies = "optimal,round_robin,random";
  std::string sim_policy_file, cmp_policy_file;

  auto* check = app.add_subcommand("check", "feasibility, coupling bound and detectability");
  add_common(check, check_opt, false);
  auto* solve = app.add_subcommand("solve", "solve the scheduling MDP");
  add_common(solve, solve_opt, false);
  solve->add_option("--method", method, "modified | bruteforce | both")
      ->check(CLI::IsMember({"modified", "bruteforce", "both"}));
  auto* simulate = app.add_subcommand("simulate", "closed-loop episodes for one policy");
  add_common(simulate, sim_opt, true);
  simulate->add_option("--policy", sim_policy,
                       "optimal | round_robin | modified_round_robin | random");
  simulate->add_option("--policy-file", sim_policy_file, "solved policy CSV (default OUT/policy.csv)");
  auto* compare = app.add_subcommand("compare", "J_AVG comparison across policies");
  add_common(compare, cmp_opt, true);
  compare->add_option("--policies", policies, "comma-separated policy list");
  compare->add_option("--policy-file", cmp_policy_file, "solved policy CSV (default OUT/policy.csv)");
  auto* exp = app.add_subcommand("export", "steady state and reward table for plotting");
  add_common(exp, exp_opt, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*check) return cmd_check(check_opt);
    if (*solve) return cmd_solve(solve_opt, method);
    if (*simulate) return cmd_simulate(sim_opt, sim_policy, sim_policy_file);
    if (*compare) return cmd_compare(cmp_opt, policies, cmp_policy_file);
    if (*exp) return cmd_export(exp_opt);
  } catch (const io::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
