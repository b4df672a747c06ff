// Acceptance suite: one PASS/FAIL line per criterion. `acceptance --only NAME` runs one.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "test_support.hpp"

using namespace sensched;
using namespace sensched::testing;

namespace {

// Pinned tolerances.
constexpr double kFeasLow = 0.77, kFeasHigh = 0.81, kFeasMaxMs = 1.0;
constexpr double kDareRelTol = 1e-6, kDareMaxSeconds = 1.0;
constexpr int kDareInstances = 20;
constexpr int kMcEpisodes = 10000, kMcSteps = 20;
constexpr double kMcTraceSigmas = 3.0, kMcMeanSigmas = 4.0, kMcMaxSeconds = 120.0;
constexpr int kMonotoneSteps = 200;
constexpr double kMonotoneEigTol = -1e-9;
constexpr int kRandomInstances = 10, kRandomTauMaxCap = 15;
constexpr double kCase1SolveMaxSeconds = 60.0;
constexpr int kBoundaryBand = 5;
constexpr double kStep8Ratio = 0.60;
constexpr double kClosedFormAgreement = 0.99;
constexpr int kSeeds = 20;
constexpr long kHorizon = 10000;
constexpr double kOrderingMaxSeconds = 300.0;
constexpr int kMonotonePairs = 10000, kMemoStates = 1000;
constexpr double kClosedFormRelTol = 1e-9, kKernelTol = 1e-12;

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const SteadyState& case1_steady() {
  static const SteadyState s = solve_steady_state(case1_model());
  return s;
}

const SolveResult& case1_solution() {
  static const SolveResult r =
      solve_rvi_modified(SchedulingMdp(case1_model(), case1_steady(), case1_problem()));
  return r;
}

Outcome feasibility() {
  const auto model = case1_model();
  const auto t0 = std::chrono::steady_clock::now();
  const auto f = check_feasibility(model, 0.8, 1);
  const double ms = 1e3 * seconds_since(t0);
  const bool ok = f.value >= kFeasLow && f.value <= kFeasHigh && f.value < 1.0 && ms < kFeasMaxMs;
  return {ok, fmt("value %.5f in [%.2f, %.2f], %.3f ms", f.value, kFeasLow, kFeasHigh, ms)};
}

Outcome steady_state_dare() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  int tried = 0;
  const auto t0 = std::chrono::steady_clock::now();
  while (tried < kDareInstances) {
    const auto m = random_decoupled_model(3, 2, 1, rng);
    if (!is_detectable(m.A, m.C)) continue;
    ++tried;
    const auto ss = solve_steady_state(m);
    const Matrix ref = dare_doubling(m.A, m.C, m.Q[0], m.R[0]);
    worst = std::max(worst, linalg::max_abs_diff(ss.P_breve[0], ref) / linalg::max_abs(ref));
  }
  const double secs = seconds_since(t0);
  return {worst <= kDareRelTol && secs < kDareMaxSeconds,
          fmt("%d instances, worst rel err %.2e, %.3f s", tried, worst, secs)};
}

Outcome estimator_bound() {
  const auto model = case1_model();
  const IndexCache cache(model, case1_steady());
  RoundRobinScheduler rr(2, 1);
  EpisodeConfig cfg;
  cfg.problem = case1_problem();
  cfg.horizon = kMcSteps;
  cfg.x0 = {Vector::Constant(2, 1.0), Vector::Constant(2, 2.0)};
  std::vector<std::vector<Vector>> errs(2);
  const auto t0 = std::chrono::steady_clock::now();
  for (int e = 1; e <= kMcEpisodes; ++e) {
    cfg.seed = static_cast<std::uint64_t>(e);
    const auto t = run_episode(cache, rr, cfg);
    for (int i = 0; i < 2; ++i) errs[i].push_back(t.x.back()[i] - t.sensor_estimate.back()[i]);
  }
  const double secs = seconds_since(t0);
  bool ok = secs < kMcMaxSeconds;
  std::string detail;
  for (int i = 0; i < 2; ++i) {
    const double n = errs[i].size();
    Vector mean = Vector::Zero(2);
    for (const auto& e : errs[i]) mean += e;
    mean /= n;
    std::vector<double> sq;
    Vector var = Vector::Zero(2);
    double sum = 0.0, sum2 = 0.0;
    for (const auto& e : errs[i]) {
      const Vector d = e - mean;
      const double q = d.squaredNorm();
      sum += q;
      sum2 += q * q;
      var += d.cwiseProduct(d);
    }
    var /= n - 1.0;
    const double tr = sum / (n - 1.0);
    const double se_tr = std::sqrt(std::max(0.0, sum2 / n - (sum / n) * (sum / n)) / n);
    const double bound = case1_steady().P[i].trace();
    const bool cov_ok = tr <= bound + kMcTraceSigmas * se_tr;
    double worst_z = 0.0;
    for (int c = 0; c < 2; ++c) worst_z = std::max(worst_z, std::abs(mean(c)) / std::sqrt(var(c) / n));
    const bool mean_ok = worst_z <= kMcMeanSigmas;
    ok = ok && cov_ok && mean_ok;
    detail += fmt("node %d: Tr(cov) %.4f <= %.4f + 3*%.4f, |mean|/se %.2f; ", i + 1, tr, bound,
                  se_tr, worst_z);
  }
  return {ok, detail + fmt("%d episodes, %.1f s", kMcEpisodes, secs)};
}

Outcome monotone_growth() {
  const auto m = case1_model();
  BoundState s = BoundState::zero(m);
  double worst = std::numeric_limits<double>::infinity();
  for (int k = 0; k < kMonotoneSteps; ++k) {
    const BoundState next = bound_step(m, s);
    for (int i = 0; i < m.N; ++i)
      worst = std::min(worst, linalg::min_eigenvalue(linalg::symmetrized(next.P[i] - s.P[i])));
    s = next;
  }
  return {worst >= kMonotoneEigTol,
          fmt("%d steps, min eigenvalue of P_{k+1}-P_k = %.3e", kMonotoneSteps, worst)};
}

Outcome oracle_equivalence() {
  const auto model = case1_model();
  const auto t0 = std::chrono::steady_clock::now();
  const SchedulingMdp mdp(model, case1_steady(), case1_problem());
  const auto mod = solve_rvi_modified(mdp);
  const double case1_secs = seconds_since(t0);
  const auto brute = solve_rvi_bruteforce(mdp);
  auto agree = [](const SolveResult& a, const SolveResult& b, double eps) {
    if (a.policy.choice != b.policy.choice) return false;
    for (std::size_t i = 0; i < a.values.values.size(); ++i)
      if (std::abs(a.values.values[i] - b.values.values[i]) > eps) return false;
    return true;
  };
  bool ok = agree(mod, brute, mdp.problem().epsilon) && case1_secs < kCase1SolveMaxSeconds;
  std::mt19937_64 rng(31337);
  std::uniform_real_distribution<double> lam(0.3, 1.0), unit(0.0, 1.0);
  std::uniform_int_distribution<int> cap(4, kRandomTauMaxCap);
  int matched = 0;
  for (int t = 0; t < kRandomInstances; ++t) {
    auto m = case1_model();
    m.A = random_matrix(2, 2, rng, 0.5);
    m.G = random_matrix(2, 2, rng, 0.3);
    m.mu = 0.3 * unit(rng);
    m.Q = {random_spd(2, rng), random_spd(2, rng)};
    m.R = {random_spd(2, rng), random_spd(2, rng)};
    MdpProblem p = case1_problem(cap(rng));
    p.lambda = {lam(rng), lam(rng)};
    p.kappa = 5.0 * unit(rng);
    const SchedulingMdp rm(m, solve_steady_state(m), p);
    matched += agree(solve_rvi_modified(rm), solve_rvi_bruteforce(rm), p.epsilon);
  }
  ok = ok && matched == kRandomInstances;
  return {ok, fmt("Case 1 identical: %s (%.3f s); random instances matched %d/%d",
                  agree(mod, brute, mdp.problem().epsilon) ? "yes" : "no", case1_secs, matched,
                  kRandomInstances)};
}

Outcome threshold_structure() {
  const auto& p = case1_solution().policy;
  const auto v = threshold_violations(p, kBoundaryBand);
  std::size_t interior = 0;
  for (std::size_t idx = 0; idx < p.lattice.size(); ++idx)
    interior += !p.lattice.near_boundary(idx, kBoundaryBand);
  return {v.empty(), fmt("%zu violations over %zu interior states (band %d)", v.size(), interior,
                         kBoundaryBand)};
}

Outcome step8_savings() {
  const SchedulingMdp mdp(case1_model(), case1_steady(), case1_problem());
  const auto b = solve_rvi_bruteforce(mdp).policy.meta.step8_count;
  const auto m = solve_rvi_modified(mdp).policy.meta.step8_count;
  const double ratio = static_cast<double>(m) / static_cast<double>(b);
  return {ratio <= kStep8Ratio,
          fmt("modified %lld / brute %lld = %.1f%% (limit %.0f%%)", m, b, 100 * ratio,
              100 * kStep8Ratio)};
}

Outcome closed_form_consistency() {
  const auto& p = case1_solution().policy;
  const auto closed = closed_form_policy(case1_model(), case1_problem(), ClosedFormKind::two_node);
  std::size_t interior = 0, agree = 0;
  for (std::size_t idx = 0; idx < p.lattice.size(); ++idx) {
    if (p.lattice.near_boundary(idx, kBoundaryBand)) continue;
    ++interior;
    agree += p.at(idx) == closed.at(idx);
  }
  const double frac = static_cast<double>(agree) / static_cast<double>(interior);
  return {frac >= kClosedFormAgreement,
          fmt("%zu/%zu interior states agree (%.2f%%)", agree, interior, 100 * frac)};
}

Outcome case2_shift(const MdpProblem& shifted, const char* label) {
  const auto sol = solve_rvi_modified(SchedulingMdp(case1_model(), case1_steady(), shifted));
  const long long base = case1_solution().policy.scheduled_counts()[1];
  const long long got = sol.policy.scheduled_counts()[1];
  return {got > base, fmt("%s: sensor-2 states %lld vs symmetric %lld (of %zu vs %zu)", label, got,
                          base, sol.policy.lattice.size(), case1_solution().policy.lattice.size())};
}

Outcome case2_lambda_shift() {
  MdpProblem p = case1_problem();
  p.lambda = {1.0, 0.8};
  return case2_shift(p, "lambda=(1,0.8)");
}

Outcome case2_delay_shift() {
  MdpProblem p = case1_problem();
  p.delays = {0, 1};
  return case2_shift(p, "delays=(0,1)");
}

Outcome policy_ordering() {
  const auto model = case1_model();
  const IndexCache cache(model, case1_steady());
  EpisodeConfig cfg;
  cfg.problem = case1_problem();
  cfg.horizon = kHorizon;
  cfg.x0 = {Vector::Constant(2, 1.0), Vector::Constant(2, 2.0)};
  cfg.record_states = false;
  std::vector<std::uint64_t> seeds(kSeeds);
  for (int s = 0; s < kSeeds; ++s) seeds[s] = static_cast<std::uint64_t>(s + 1);
  const auto t0 = std::chrono::steady_clock::now();
  PolicyScheduler opt(case1_solution().policy);
  RoundRobinScheduler rr(2, 1);
  RandomScheduler rnd(2, 1);
  const auto so = run_ensemble(cache, opt, cfg, seeds);
  const auto sr = run_ensemble(cache, rr, cfg, seeds);
  const auto sx = run_ensemble(cache, rnd, cfg, seeds);
  const double secs = seconds_since(t0);
  const bool ok = so.mean < sr.mean && so.mean < sx.mean && so.ci_high() < sr.ci_low() &&
                  so.ci_high() < sx.ci_low() && secs < kOrderingMaxSeconds;
  return {ok, fmt("optimal %.3f [%.3f, %.3f]; round_robin %.3f [%.3f, %.3f]; random %.3f "
                  "[%.3f, %.3f]; %.1f s",
                  so.mean, so.ci_low(), so.ci_high(), sr.mean, sr.ci_low(), sr.ci_high(), sx.mean,
                  sx.ci_low(), sx.ci_high(), secs)};
}

Outcome reward_properties() {
  const auto model = case1_model();
  const auto& steady = case1_steady();
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> age(1, 50), sensor(0, 1), step(1, 10);
  const Action a{{1, 0}};
  int mono_bad = 0;
  for (int t = 0; t < kMonotonePairs; ++t) {
    AgeState s{{age(rng), age(rng)}};
    AgeState up = s;
    up.tau[sensor(rng)] += step(rng);
    mono_bad += one_stage_reward(model, steady, s, a, 20.0, 1) >
                one_stage_reward(model, steady, up, a, 20.0, 1);
  }
  IndexCache cache(model, steady);
  int memo_bad = 0;
  for (int t = 0; t < kMemoStates; ++t) {
    const AgeState s{{age(rng), age(rng)}};
    cache.at(s);
    memo_bad += cache.at(s).trace_sum != reconstruct_indices(model, steady, s).trace_sum;
  }
  double worst = 0.0;
  for (int gap = 0; gap <= 40; ++gap) {
    const auto idx = reconstruct_indices(model, steady, AgeState{{gap, 0}});
    const Matrix ref = hbar_node(model, steady.P, 0, gap);
    worst = std::max(worst, linalg::max_abs_diff(idx.P_k[0], ref) / linalg::max_abs(ref));
    const auto mirrored = reconstruct_indices(model, steady, AgeState{{0, gap}});
    const Matrix ref2 = hbar_node(model, steady.P, 1, gap);
    worst = std::max(worst, linalg::max_abs_diff(mirrored.P_k[1], ref2) / linalg::max_abs(ref2));
  }
  const bool ok = mono_bad == 0 && memo_bad == 0 && worst <= kClosedFormRelTol;
  return {ok, fmt("monotone violations %d/%d, memo mismatches %d/%d, closed-form rel err %.2e",
                  mono_bad, kMonotonePairs, memo_bad, kMemoStates, worst)};
}

Outcome kernel_sanity() {
  const MdpProblem p = case1_problem();
  const StateLattice L(p.delays, p.tau_max);
  const auto actions = enumerate_actions(2, p.M);
  double worst = 0.0;
  std::size_t rows = 0;
  for (std::size_t idx = 0; idx < L.size(); ++idx)
    for (const auto& a : actions) {
      double total = 0.0;
      for (const auto& [s, pr] : transition_distribution(L.state(idx), a, p)) total += pr;
      worst = std::max(worst, std::abs(total - 1.0));
      ++rows;
    }
  return {worst <= kKernelTol, fmt("%zu rows, max |sum - 1| = %.2e", rows, worst)};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {"feasibility", feasibility},
      {"steady_state_dare", steady_state_dare},
      {"estimator_bound", estimator_bound},
      {"monotone_growth", monotone_growth},
      {"oracle_equivalence", oracle_equivalence},
      {"threshold_structure", threshold_structure},
      {"step8_savings", step8_savings},
      {"closed_form_consistency", closed_form_consistency},
      {"case2_lambda_shift", case2_lambda_shift},
      {"case2_delay_shift", case2_delay_shift},
      {"policy_ordering", policy_ordering},
      {"reward_properties", reward_properties},
      {"kernel_sanity", kernel_sanity},
  };
  std::string only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only = argv[++i];
    } else if (std::strcmp(argv[i], "--list") == 0) {
      for (const auto& c : all) std::printf("%s\n", c.name);
      return 0;
    } else {
      std::fprintf(stderr, "usage: %s [--only NAME | --list]\n", argv[0]);
      return 2;
    }
  }
  int failures = 0, ran = 0;
  for (const auto& c : all) {
    if (!only.empty() && only != c.name) continue;
    ++ran;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %-22s %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  if (ran == 0) {
    std::fprintf(stderr, "unknown criterion '%s'\n", only.c_str());
    return 2;
  }
  return failures == 0 ? 0 : 1;
}
