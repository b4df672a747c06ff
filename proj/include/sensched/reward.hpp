#pragma once

#include <algorithm>
#include <memory>
#include <mutex>
#include <numeric>
#include <shared_mutex>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "sensched/estimator.hpp"
#include "sensched/model.hpp"

namespace sensched {

/// Per-node packet ages: steps since the node last received its sensor's estimate.
struct AgeState {
  std::vector<int> tau;

  int size() const { return static_cast<int>(tau.size()); }
  int operator[](int i) const { return tau[i]; }
  bool operator==(const AgeState&) const = default;
};

struct AgeStateHash {
  std::size_t operator()(const AgeState& s) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (int t : s.tau) h = (h ^ static_cast<std::size_t>(t)) * 1099511628211ull;
    return h;
  }
};

/// Scheduling decision: alpha_i = 1 when sensor i is asked to transmit.
struct Action {
  std::vector<int> alpha;

  int size() const { return static_cast<int>(alpha.size()); }
  int cardinality() const { return std::accumulate(alpha.begin(), alpha.end(), 0); }
  bool operator==(const Action&) const = default;
  auto operator<=>(const Action&) const = default;
};

struct IndexSet {
  MatrixList P_k;
  std::vector<double> traces;
  double trace_sum = 0.0;
};

/// Rebuilds the per-node indices P_{k,i} from the ages alone.
///
/// Node h holds P_h at every virtual step l <= k - tau_h; afterwards it is propagated with
/// the neighbour values of the previous step. The horizon is T = max_i tau_i.
inline IndexSet reconstruct_indices(const NetworkModel& model, const SteadyState& steady,
                                    const AgeState& s) {
  if (s.size() != model.N) throw std::invalid_argument("age state does not match node count");
  const auto t = tilde_matrices(model);
  const int horizon = *std::max_element(s.tau.begin(), s.tau.end());
  MatrixList Y = steady.P;
  MatrixList next(model.N);
  // offset = k - l counts down to zero at step k.
  for (int offset = horizon - 1; offset >= 0; --offset) {
    for (int i = 0; i < model.N; ++i)
      next[i] = (s.tau[i] > offset) ? propagate_bound(model, t, i, Y) : steady.P[i];
    std::swap(Y, next);
  }
  IndexSet out;
  out.traces.reserve(model.N);
  for (int i = 0; i < model.N; ++i) {
    out.traces.push_back(Y[i].trace());
    out.trace_sum += out.traces.back();
  }
  out.P_k = std::move(Y);
  return out;
}

/// c(s, a) = sum_i Tr(P_{k,i}(s)) + kappa * sum_i alpha_i. Requires exactly M transmissions.
inline double one_stage_reward(const NetworkModel& model, const SteadyState& steady,
                               const AgeState& s, const Action& a, double kappa, int M) {
  if (a.size() != model.N || a.cardinality() != M)
    throw std::invalid_argument("action must schedule exactly M sensors");
  return reconstruct_indices(model, steady, s).trace_sum + kappa * a.cardinality();
}

/// Memoized index reconstruction keyed by the full age tuple.
///
/// Readers share a lock; a miss computes outside the lock and inserts under an exclusive one,
/// so lookups never wait on the computation of unrelated keys.
class IndexCache {
 public:
  IndexCache(NetworkModel model, SteadyState steady)
      : model_(std::move(model)), steady_(std::move(steady)) {}

  const NetworkModel& model() const { return model_; }
  const SteadyState& steady() const { return steady_; }

  const IndexSet& at(const AgeState& s) const {
    {
      std::shared_lock lock(mutex_);
      auto it = table_.find(s);
      if (it != table_.end()) return it->second;
    }
    IndexSet fresh = reconstruct_indices(model_, steady_, s);
    std::unique_lock lock(mutex_);
    return table_.try_emplace(s, std::move(fresh)).first->second;
  }

  double reward(const AgeState& s, const Action& a, double kappa, int M) const {
    if (a.size() != model_.N || a.cardinality() != M)
      throw std::invalid_argument("action must schedule exactly M sensors");
    return at(s).trace_sum + kappa * a.cardinality();
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return table_.size();
  }

 private:
  NetworkModel model_;
  SteadyState steady_;
  mutable std::shared_mutex mutex_;
  // Element references stay valid across rehashing.
  mutable std::unordered_map<AgeState, IndexSet, AgeStateHash> table_;
};

}  // namespace sensched
