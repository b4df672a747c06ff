#pragma once

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sensched/estimator.hpp"
#include "sensched/model.hpp"
#include "sensched/reward.hpp"

namespace sensched {

struct MdpProblem {
  std::vector<double> lambda;  // per-sensor delivery probability
  double kappa = 0.0;          // cost per transmission
  int M = 1;                   // transmissions per step, exactly
  int tau_max = 50;            // age truncation
  std::vector<int> delays;     // 1: one-step delay (min age 1), 0: immediate (min age 0)
  double epsilon = 0.01;       // sup-norm stopping tolerance
  int max_sweeps = 10000;

  int sensors() const { return static_cast<int>(lambda.size()); }

  void validate() const {
    const int N = sensors();
    if (N < 1) throw std::invalid_argument("problem needs at least one sensor");
    for (double l : lambda)
      if (!(l > 0.0 && l <= 1.0)) throw std::invalid_argument("lambda_i must lie in (0, 1]");
    if (M < 1 || M > N) throw std::invalid_argument("M must satisfy 1 <= M <= N");
    if (tau_max < 2) throw std::invalid_argument("tau_max must be >= 2");
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
    if (static_cast<int>(delays.size()) != N)
      throw std::invalid_argument("delays must hold one flag per sensor");
    for (int d : delays)
      if (d != 0 && d != 1) throw std::invalid_argument("delay flags must be 0 or 1");
    if (max_sweeps < 1) throw std::invalid_argument("max_sweeps must be positive");
  }
};

/// Mixed-radix enumeration of the truncated age lattice. Index order is lexicographic with
/// the last sensor varying fastest, so every s' <=_i s precedes s.
class StateLattice {
 public:
  StateLattice() = default;
  StateLattice(const std::vector<int>& delays, int tau_max) : tau_max_(tau_max) {
    const int N = static_cast<int>(delays.size());
    low_.resize(N);
    dims_.resize(N);
    strides_.resize(N);
    for (int i = 0; i < N; ++i) {
      low_[i] = delays[i] == 0 ? 0 : 1;
      dims_[i] = tau_max - low_[i] + 1;
    }
    std::size_t stride = 1;
    for (int i = N - 1; i >= 0; --i) {
      strides_[i] = stride;
      stride *= static_cast<std::size_t>(dims_[i]);
    }
    size_ = stride;
  }

  int sensors() const { return static_cast<int>(low_.size()); }
  std::size_t size() const { return size_; }
  int tau_max() const { return tau_max_; }
  int low(int i) const { return low_[i]; }
  std::size_t stride(int i) const { return strides_[i]; }

  bool contains(const AgeState& s) const {
    if (s.size() != sensors()) return false;
    for (int i = 0; i < sensors(); ++i)
      if (s.tau[i] < low_[i] || s.tau[i] > tau_max_) return false;
    return true;
  }

  /// Ages outside the lattice are clamped to it.
  std::size_t index(const AgeState& s) const {
    std::size_t idx = 0;
    for (int i = 0; i < sensors(); ++i) {
      const int t = std::clamp(s.tau[i], low_[i], tau_max_);
      idx += static_cast<std::size_t>(t - low_[i]) * strides_[i];
    }
    return idx;
  }

  AgeState state(std::size_t idx) const {
    AgeState s;
    s.tau.resize(sensors());
    for (int i = 0; i < sensors(); ++i) {
      s.tau[i] = low_[i] + static_cast<int>((idx / strides_[i]) % dims_[i]);
    }
    return s;
  }

  int age(std::size_t idx, int i) const {
    return low_[i] + static_cast<int>((idx / strides_[i]) % dims_[i]);
  }

  /// Lattice minimum (1, ..., 1), or 0 for immediate-delivery sensors.
  std::size_t anchor() const { return 0; }

  /// True if some age lies within `band` of the truncation cap.
  bool near_boundary(std::size_t idx, int band) const {
    for (int i = 0; i < sensors(); ++i)
      if (age(idx, i) > tau_max_ - band) return true;
    return false;
  }

 private:
  int tau_max_ = 0;
  std::vector<int> low_;
  std::vector<int> dims_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

/// All binary vectors with exactly M ones, in ascending lexicographic order.
inline std::vector<Action> enumerate_actions(int N, int M) {
  std::vector<Action> out;
  std::vector<int> alpha(N, 0);
  std::fill(alpha.end() - M, alpha.end(), 1);
  do {
    out.push_back(Action{alpha});
  } while (std::next_permutation(alpha.begin(), alpha.end()));
  return out;
}

/// Product-form kernel: a scheduled sensor resets with probability lambda_i (to 1, or to 0
/// without delay) and otherwise ages; an unscheduled sensor ages. Ages saturate at tau_max.
inline std::vector<std::pair<AgeState, double>> transition_distribution(
    const AgeState& s, const Action& a, const MdpProblem& problem) {
  const int N = problem.sensors();
  std::vector<int> scheduled;
  for (int i = 0; i < N; ++i)
    if (a.alpha[i] != 0) scheduled.push_back(i);
  AgeState aged = s;
  for (int i = 0; i < N; ++i) aged.tau[i] = std::min(s.tau[i] + 1, problem.tau_max);

  std::vector<std::pair<AgeState, double>> out;
  const std::size_t outcomes = std::size_t{1} << scheduled.size();
  for (std::size_t mask = 0; mask < outcomes; ++mask) {
    AgeState next = aged;
    double p = 1.0;
    for (std::size_t b = 0; b < scheduled.size(); ++b) {
      const int i = scheduled[b];
      if (mask & (std::size_t{1} << b)) {
        p *= problem.lambda[i];
        next.tau[i] = problem.delays[i] == 0 ? 0 : 1;
      } else {
        p *= 1.0 - problem.lambda[i];
      }
    }
    if (p > 0.0) out.emplace_back(std::move(next), p);
  }
  return out;
}

struct SolveMetadata {
  std::string method;
  int iterations = 0;
  long long step8_count = 0;
  bool converged = false;
  double j_star = 0.0;
  double final_change = 0.0;
  double wall_seconds = 0.0;
  bool pruning_abandoned = false;  // certification sweep found a non-threshold optimum
};

/// Stationary deterministic schedule over the truncated lattice.
struct Policy {
  StateLattice lattice;
  std::vector<Action> actions;
  std::vector<int> choice;  // action index per lattice state
  SolveMetadata meta;

  const Action& at(std::size_t idx) const { return actions[choice[idx]]; }
  const Action& at(const AgeState& s) const { return at(lattice.index(s)); }

  /// Number of lattice states scheduling each sensor.
  std::vector<long long> scheduled_counts() const {
    std::vector<long long> counts(lattice.sensors(), 0);
    for (std::size_t idx = 0; idx < choice.size(); ++idx)
      for (int i = 0; i < lattice.sensors(); ++i) counts[i] += at(idx).alpha[i];
    return counts;
  }
};

struct ValueFunction {
  std::vector<double> values;
  std::size_t anchor = 0;
};

struct SolveResult {
  Policy policy;
  ValueFunction values;
};

/// The scheduling MDP on the truncated lattice with a warm-filled reward table and
/// precomputed successor lists.
class SchedulingMdp {
 public:
  SchedulingMdp(const NetworkModel& model, const SteadyState& steady, MdpProblem problem)
      : problem_(std::move(problem)) {
    problem_.validate();
    if (problem_.sensors() != model.N)
      throw std::invalid_argument("problem sensor count does not match the model");
    lattice_ = StateLattice(problem_.delays, problem_.tau_max);
    actions_ = enumerate_actions(model.N, problem_.M);

    trace_sum_.resize(lattice_.size());
    for (std::size_t idx = 0; idx < lattice_.size(); ++idx)
      trace_sum_[idx] = reconstruct_indices(model, steady, lattice_.state(idx)).trace_sum;

    const std::size_t A = actions_.size();
    succ_offset_.assign(lattice_.size() * A + 1, 0);
    for (std::size_t idx = 0; idx < lattice_.size(); ++idx) {
      const AgeState s = lattice_.state(idx);
      for (std::size_t a = 0; a < A; ++a) {
        for (auto& [next, p] : transition_distribution(s, actions_[a], problem_)) {
          succ_index_.push_back(lattice_.index(next));
          succ_prob_.push_back(p);
        }
        succ_offset_[idx * A + a + 1] = succ_index_.size();
      }
    }
  }

  const MdpProblem& problem() const { return problem_; }
  const StateLattice& lattice() const { return lattice_; }
  const std::vector<Action>& actions() const { return actions_; }
  double trace_sum(std::size_t idx) const { return trace_sum_[idx]; }

  double reward(std::size_t idx, std::size_t a) const {
    return trace_sum_[idx] + problem_.kappa * actions_[a].cardinality();
  }

  /// c(s, a) + sum_{s+} V(s+) P(s+ | s, a)
  double q_value(std::size_t idx, std::size_t a, const std::vector<double>& V) const {
    const std::size_t key = idx * actions_.size() + a;
    double acc = 0.0;
    for (std::size_t e = succ_offset_[key]; e < succ_offset_[key + 1]; ++e)
      acc += succ_prob_[e] * V[succ_index_[e]];
    return reward(idx, a) + acc;
  }

  /// Lexicographically smallest candidate whose Q-value is within a relative 1e-9 of the
  /// minimum; keeps symmetric ties deterministic under floating-point noise.
  std::pair<std::size_t, double> argmin(std::size_t idx, const std::vector<std::size_t>& cand,
                                        const std::vector<double>& V) const {
    std::vector<double> q(cand.size());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cand.size(); ++c) {
      q[c] = q_value(idx, cand[c], V);
      best = std::min(best, q[c]);
    }
    const double tol = 1e-9 * std::max(1.0, std::abs(best));
    for (std::size_t c = 0; c < cand.size(); ++c)
      if (q[c] <= best + tol) return {cand[c], q[c]};
    return {cand.front(), q.front()};
  }

  std::size_t action_index(const Action& a) const {
    auto it = std::find(actions_.begin(), actions_.end(), a);
    if (it == actions_.end()) throw std::invalid_argument("action is not admissible");
    return static_cast<std::size_t>(it - actions_.begin());
  }

 private:
  MdpProblem problem_;
  StateLattice lattice_;
  std::vector<Action> actions_;
  std::vector<double> trace_sum_;
  std::vector<std::size_t> succ_offset_;
  std::vector<std::size_t> succ_index_;
  std::vector<double> succ_prob_;
};

namespace detail {

/// Relative value iteration. With `prune`, sweeps after the first skip the full argmin
/// wherever the threshold structure already fixes the scheduled set: sensor i is forced at s
/// when the state one step below in coordinate i (same sweep) schedules i. Once the pruned
/// iteration settles, one full sweep certifies the policy; if the unrestricted argmin disagrees
/// (the optimum lacks the threshold structure, e.g. near the truncation boundary), pruning is
/// switched off and the iteration continues unrestricted.
inline SolveResult relative_value_iteration(const SchedulingMdp& mdp, bool prune) {
  const auto start = std::chrono::steady_clock::now();
  const auto& lattice = mdp.lattice();
  const std::size_t S = lattice.size();
  const std::size_t A = mdp.actions().size();
  const int N = lattice.sensors();
  const int M = mdp.problem().M;

  std::vector<std::size_t> all(A);
  for (std::size_t a = 0; a < A; ++a) all[a] = a;

  // Actions containing a given forced set, keyed by its bitmask.
  auto containing = [&](unsigned forced) {
    std::vector<std::size_t> out;
    for (std::size_t a = 0; a < A; ++a) {
      bool ok = true;
      for (int i = 0; i < N && ok; ++i)
        if ((forced >> i) & 1u) ok = mdp.actions()[a].alpha[i] == 1;
      if (ok) out.push_back(a);
    }
    return out;
  };
  std::vector<std::vector<std::size_t>> by_forced;
  if (prune) {
    if (N > 20) throw std::invalid_argument("pruned solver supports at most 20 sensors");
    by_forced.resize(std::size_t{1} << N);
    for (unsigned f = 0; f < by_forced.size(); ++f)
      if (std::popcount(f) <= M) by_forced[f] = containing(f);
  }

  SolveResult res;
  res.policy.lattice = lattice;
  res.policy.actions = mdp.actions();
  res.policy.choice.assign(S, 0);
  res.policy.meta.method = prune ? "modified" : "bruteforce";
  res.values.anchor = lattice.anchor();

  std::vector<double> V(S, 0.0), Vn(S, 0.0);
  std::vector<int>& pol = res.policy.choice;
  long long step8 = 0;
  bool pruning = prune, certifying = false;
  std::vector<int> pruned_policy;

  for (int sweep = 1; sweep <= mdp.problem().max_sweeps; ++sweep) {
    if (certifying) pruned_policy = pol;
    for (std::size_t idx = 0; idx < S; ++idx) {
      if (!pruning || sweep == 1 || certifying) {
        auto [a, q] = mdp.argmin(idx, all, V);
        pol[idx] = static_cast<int>(a);
        Vn[idx] = q;
        ++step8;
        continue;
      }
      unsigned forced = 0;
      for (int i = 0; i < N; ++i) {
        if (lattice.age(idx, i) == lattice.low(i)) continue;
        const std::size_t below = idx - lattice.stride(i);
        if (mdp.actions()[pol[below]].alpha[i] == 1) forced |= 1u << i;
      }
      const std::vector<std::size_t>& cand =
          std::popcount(forced) <= M ? by_forced[forced] : all;
      if (cand.size() == 1) {
        // Inherited action: the value is the Bellman backup at s itself.
        pol[idx] = static_cast<int>(cand.front());
        Vn[idx] = mdp.q_value(idx, cand.front(), V);
      } else {
        auto [a, q] = mdp.argmin(idx, cand, V);
        pol[idx] = static_cast<int>(a);
        Vn[idx] = q;
        ++step8;
      }
    }
    const double shift = Vn[res.values.anchor];
    double change = 0.0;
    for (std::size_t idx = 0; idx < S; ++idx) {
      Vn[idx] -= shift;
      change = std::max(change, std::abs(Vn[idx] - V[idx]));
    }
    std::swap(V, Vn);
    res.policy.meta.iterations = sweep;
    res.policy.meta.j_star = shift;
    res.policy.meta.final_change = change;
    if (certifying) {
      certifying = false;
      if (pol != pruned_policy) {
        pruning = false;
        res.policy.meta.pruning_abandoned = true;
        continue;
      }
    } else if (pruning && A > 1 && change <= mdp.problem().epsilon) {
      certifying = true;
      continue;
    }
    if (change <= mdp.problem().epsilon) {
      res.policy.meta.converged = true;
      break;
    }
  }
  res.policy.meta.step8_count = step8;
  res.policy.meta.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  res.values.values = std::move(V);
  if (!res.policy.meta.converged)
    throw ConvergenceError("relative value iteration did not converge within " +
                           std::to_string(mdp.problem().max_sweeps) + " sweeps");
  return res;
}

}  // namespace detail

/// Plain relative value iteration: the full argmin at every state in every sweep.
inline SolveResult solve_rvi_bruteforce(const SchedulingMdp& mdp) {
  return detail::relative_value_iteration(mdp, false);
}

/// Relative value iteration with threshold pruning.
inline SolveResult solve_rvi_modified(const SchedulingMdp& mdp) {
  return detail::relative_value_iteration(mdp, true);
}

/// max_v |min_a [c(s,a) + E V(s+)] - V(s) - J*|
inline double bellman_residual(const SchedulingMdp& mdp, const SolveResult& sol) {
  std::vector<std::size_t> all(mdp.actions().size());
  for (std::size_t a = 0; a < all.size(); ++a) all[a] = a;
  double worst = 0.0;
  for (std::size_t idx = 0; idx < mdp.lattice().size(); ++idx) {
    const double q = mdp.argmin(idx, all, sol.values.values).second;
    worst = std::max(worst, std::abs(q - sol.values.values[idx] - sol.policy.meta.j_star));
  }
  return worst;
}

struct ThresholdViolation {
  std::size_t state = 0;
  std::size_t larger = 0;
  int sensor = 0;
};

/// Pairs (s, s + e_i) where sensor i is scheduled at s but not at s + e_i. Both states must
/// keep every age at or below tau_max - band. Adjacent pairs suffice since the relation
/// s <=_i s' is the transitive closure of single-step increments.
inline std::vector<ThresholdViolation> threshold_violations(const Policy& policy, int band = 0) {
  std::vector<ThresholdViolation> out;
  const auto& L = policy.lattice;
  for (std::size_t idx = 0; idx < L.size(); ++idx) {
    if (L.near_boundary(idx, band)) continue;
    for (int i = 0; i < L.sensors(); ++i) {
      if (L.age(idx, i) >= L.tau_max()) continue;
      const std::size_t up = idx + L.stride(i);
      if (L.near_boundary(up, band)) continue;
      if (policy.at(idx).alpha[i] == 1 && policy.at(up).alpha[i] == 0)
        out.push_back({idx, up, i});
    }
  }
  return out;
}

enum class ClosedFormKind { max_age, two_node };

/// Known optimal schedules for identical nodes on a strongly connected graph: the M oldest
/// sensors (ties to the lowest index), or for two nodes and M = 1 the switch
/// (1,0) if tau_1 > tau_2 else (0,1).
inline Action closed_form_action(const AgeState& s, int M, ClosedFormKind kind) {
  const int N = s.size();
  Action a{std::vector<int>(N, 0)};
  if (kind == ClosedFormKind::two_node) {
    a.alpha[s.tau[0] > s.tau[1] ? 0 : 1] = 1;
    return a;
  }
  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return s.tau[x] > s.tau[y]; });
  for (int k = 0; k < M; ++k) a.alpha[order[k]] = 1;
  return a;
}

inline Policy closed_form_policy(const NetworkModel& model, const MdpProblem& problem,
                                 ClosedFormKind kind) {
  problem.validate();
  if (problem.sensors() != model.N)
    throw std::invalid_argument("problem sensor count does not match the model");
  if (!has_identical_nodes(model))
    throw std::domain_error("closed-form policy needs identical Q, R and a strongly "
                            "connected graph");
  if (kind == ClosedFormKind::two_node && (model.N != 2 || problem.M != 1))
    throw std::domain_error("two-node policy needs N = 2 and M = 1");
  Policy p;
  p.lattice = StateLattice(problem.delays, problem.tau_max);
  p.actions = enumerate_actions(model.N, problem.M);
  p.meta.method = kind == ClosedFormKind::two_node ? "two_node" : "max_age";
  p.meta.converged = true;
  p.choice.resize(p.lattice.size());
  for (std::size_t idx = 0; idx < p.lattice.size(); ++idx) {
    const Action a = closed_form_action(p.lattice.state(idx), problem.M, kind);
    p.choice[idx] = static_cast<int>(std::find(p.actions.begin(), p.actions.end(), a) -
                                     p.actions.begin());
  }
  return p;
}

}  // namespace sensched
