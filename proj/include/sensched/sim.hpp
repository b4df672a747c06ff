#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "sensched/estimator.hpp"
#include "sensched/mdp.hpp"
#include "sensched/model.hpp"
#include "sensched/reward.hpp"

namespace sensched {

using Rng = std::mt19937_64;

/// Independent random streams of one episode. Each can be replayed from (seed, stream).
enum class Stream : std::uint64_t { initial = 1, process = 2, measurement = 3, channel = 4, policy = 5 };

inline Rng make_stream(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x5eedu};
  return Rng(seq);
}

/// Anything that picks an action from the current ages: a solved policy or a baseline.
class Scheduler {
 public:
  virtual ~Scheduler() = default;
  virtual Action choose(const AgeState& ages, long step, Rng& rng) const = 0;
  virtual std::string name() const = 0;
};

class PolicyScheduler : public Scheduler {
 public:
  explicit PolicyScheduler(Policy policy, std::string name = "optimal")
      : policy_(std::move(policy)), name_(std::move(name)) {}
  Action choose(const AgeState& ages, long, Rng&) const override { return policy_.at(ages); }
  std::string name() const override { return name_; }
  const Policy& policy() const { return policy_; }

 private:
  Policy policy_;
  std::string name_;
};

/// Cycles through the sensors in index order, M at a time.
class RoundRobinScheduler : public Scheduler {
 public:
  RoundRobinScheduler(int N, int M) : N_(N), M_(M) {}
  Action choose(const AgeState&, long step, Rng&) const override {
    Action a{std::vector<int>(N_, 0)};
    for (int j = 0; j < M_; ++j)
      a.alpha[static_cast<std::size_t>((step * M_ + j) % N_)] = 1;
    return a;
  }
  std::string name() const override { return "round_robin"; }

 private:
  int N_, M_;
};

/// Fixed groups (1..M), (M+1..2M), ..., the last one possibly short; group h transmits at
/// steps l r + h with period r = ceil(N / M).
class ModifiedRoundRobinScheduler : public Scheduler {
 public:
  ModifiedRoundRobinScheduler(int N, int M) : N_(N), M_(M), r_((N + M - 1) / M) {}
  int period() const { return r_; }
  std::vector<int> group(int h) const {
    std::vector<int> g;
    for (int i = h * M_; i < std::min(N_, (h + 1) * M_); ++i) g.push_back(i);
    return g;
  }
  Action choose(const AgeState&, long step, Rng&) const override {
    Action a{std::vector<int>(N_, 0)};
    for (int i : group(static_cast<int>(step % r_))) a.alpha[i] = 1;
    return a;
  }
  std::string name() const override { return "modified_round_robin"; }

 private:
  int N_, M_, r_;
};

/// Uniformly random M-subset each step, drawn from the episode's policy stream.
class RandomScheduler : public Scheduler {
 public:
  RandomScheduler(int N, int M) : N_(N), M_(M) {}
  Action choose(const AgeState&, long, Rng& rng) const override {
    std::vector<int> idx(N_);
    std::iota(idx.begin(), idx.end(), 0);
    Action a{std::vector<int>(N_, 0)};
    for (int j = 0; j < M_; ++j) {
      std::uniform_int_distribution<int> pick(j, N_ - 1);
      std::swap(idx[j], idx[pick(rng)]);
      a.alpha[idx[j]] = 1;
    }
    return a;
  }
  std::string name() const override { return "random"; }

 private:
  int N_, M_;
};

enum class BaselineKind { round_robin, modified_round_robin, random };

inline std::unique_ptr<Scheduler> baseline_policy(BaselineKind kind, int N, int M) {
  if (M < 1 || M > N) throw std::invalid_argument("M must satisfy 1 <= M <= N");
  switch (kind) {
    case BaselineKind::round_robin: return std::make_unique<RoundRobinScheduler>(N, M);
    case BaselineKind::modified_round_robin:
      return std::make_unique<ModifiedRoundRobinScheduler>(N, M);
    case BaselineKind::random: return std::make_unique<RandomScheduler>(N, M);
  }
  throw std::invalid_argument("unknown baseline");
}

struct ChannelOutcome {
  std::vector<int> alpha;
  std::vector<int> beta;
  std::vector<int> gamma;
  std::vector<int> tau_next;
};

struct StepRecord {
  long step = 0;
  std::vector<int> ages;
  ChannelOutcome channel;
  std::vector<double> traces;  // Tr(P_{k,i})
  double trace_sum = 0.0;
  double action_cost = 0.0;    // kappa * sum alpha
  double reward = 0.0;
};

struct EpisodeConfig {
  MdpProblem problem;
  long horizon = 10000;
  std::uint64_t seed = 0;
  std::vector<Vector> x0;               // initial true states; zeros when empty
  bool perturb_initial_estimates = true;  // xhat_0 = x_0 + N(0, P_i)
  bool record_states = true;
};

struct SimTrace {
  std::vector<StepRecord> steps;
  // Per step, per node; filled when states are recorded.
  std::vector<std::vector<Vector>> x;
  std::vector<std::vector<Vector>> sensor_estimate;
  std::vector<std::vector<Vector>> node_estimate;
  std::uint64_t seed = 0;
  std::string scheduler;
  MdpProblem problem;
};

namespace detail {

inline Vector gaussian(const Matrix& chol, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vector z(chol.rows());
  for (int r = 0; r < z.size(); ++r) z(r) = nd(rng);
  return chol * z;
}

inline Matrix cholesky_factor(const Matrix& cov) {
  Eigen::LLT<Matrix> llt(linalg::symmetrized(cov));
  if (llt.info() != Eigen::Success) {
    // PSD but singular (e.g. a zero steady bound): fall back to the eigen square root.
    Eigen::SelfAdjointEigenSolver<Matrix> es(linalg::symmetrized(cov));
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }
  return llt.matrixL();
}

}  // namespace detail

/// Closed-loop episode: plant, sensors running the steady distributed estimator, a lossy
/// scheduled channel and node-side prediction from the last delivered estimates.
///
/// Warm start at steady state with ages 1 (0 for immediate-delivery sensors). A delayed
/// packet sent at step k carries xhat^s_k (and the backlog since the last delivery) and is
/// used by the node at step k+1; an immediate packet replaces the node estimate at k+1.
/// The per-step reward is the index of the recorded ages plus kappa per transmission.
inline SimTrace run_episode(const IndexCache& indices, const Scheduler& scheduler,
                            const EpisodeConfig& cfg) {
  const NetworkModel& model = indices.model();
  const SteadyState& steady = indices.steady();
  const MdpProblem& prob = cfg.problem;
  prob.validate();
  if (cfg.horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (prob.sensors() != model.N) throw std::invalid_argument("problem/model size mismatch");
  const int N = model.N;

  Rng rng_init = make_stream(cfg.seed, Stream::initial);
  Rng rng_proc = make_stream(cfg.seed, Stream::process);
  Rng rng_meas = make_stream(cfg.seed, Stream::measurement);
  Rng rng_chan = make_stream(cfg.seed, Stream::channel);
  Rng rng_pol = make_stream(cfg.seed, Stream::policy);

  std::vector<Matrix> q_chol, r_chol;
  for (int i = 0; i < N; ++i) {
    q_chol.push_back(detail::cholesky_factor(model.Q[i]));
    r_chol.push_back(detail::cholesky_factor(model.R[i]));
  }

  std::vector<Vector> x(N), xs(N), xn(N);
  for (int i = 0; i < N; ++i) {
    x[i] = cfg.x0.empty() ? Vector::Zero(model.n) : cfg.x0[i];
    xs[i] = x[i];
    if (cfg.perturb_initial_estimates)
      xs[i] += detail::gaussian(detail::cholesky_factor(steady.P[i]), rng_init);
    xn[i] = xs[i];
  }
  std::vector<int> ages(N);
  for (int i = 0; i < N; ++i) ages[i] = prob.delays[i] == 0 ? 0 : 1;

  SimTrace trace;
  trace.seed = cfg.seed;
  trace.scheduler = scheduler.name();
  trace.problem = prob;
  trace.steps.reserve(cfg.horizon);
  std::bernoulli_distribution coin;

  for (long k = 0; k < cfg.horizon; ++k) {
    const AgeState s{ages};
    const Action a = scheduler.choose(s, k, rng_pol);
    if (a.size() != N || a.cardinality() > prob.M || a.cardinality() < 1)
      throw std::logic_error("scheduler returned an inadmissible action");

    StepRecord rec;
    rec.step = k;
    rec.ages = ages;
    const IndexSet& idx = indices.at(s);
    rec.traces = idx.traces;
    rec.trace_sum = idx.trace_sum;
    rec.action_cost = prob.kappa * a.cardinality();
    rec.reward = rec.trace_sum + rec.action_cost;

    if (cfg.record_states) {
      trace.x.push_back(x);
      trace.sensor_estimate.push_back(xs);
      trace.node_estimate.push_back(xn);
    }

    ChannelOutcome ch;
    ch.alpha = a.alpha;
    ch.beta.resize(N);
    ch.gamma.resize(N);
    ch.tau_next.resize(N);
    // One draw per sensor per step keeps channel realizations aligned across schedulers.
    for (int i = 0; i < N; ++i) {
      ch.beta[i] = coin(rng_chan, std::bernoulli_distribution::param_type(prob.lambda[i])) ? 1 : 0;
      ch.gamma[i] = ch.alpha[i] * ch.beta[i];
    }

    std::vector<Vector> X(N);
    for (int h = 0; h < N; ++h)
      X[h] = (ch.gamma[h] == 1 && prob.delays[h] == 1) ? xs[h] : xn[h];

    std::vector<Vector> x_next(N), y(N), xn_next(N);
    for (int i = 0; i < N; ++i) {
      x_next[i] = model.A * x[i];
      xn_next[i] = model.A * X[i];
      for (int j : model.neighbors(i)) {
        x_next[i] += model.mu * (model.G * x[j]);
        xn_next[i] += model.mu * (model.G * X[j]);
      }
      x_next[i] += detail::gaussian(q_chol[i], rng_proc);
    }
    for (int i = 0; i < N; ++i)
      y[i] = model.C * x_next[i] + detail::gaussian(r_chol[i], rng_meas);
    std::vector<Vector> xs_next = estimate_step(model, steady, xs, y);

    for (int i = 0; i < N; ++i) {
      if (ch.gamma[i] == 1 && prob.delays[i] == 0) xn_next[i] = xs_next[i];
      ch.tau_next[i] = ch.gamma[i] == 1 ? (prob.delays[i] == 0 ? 0 : 1)
                                        : std::min(ages[i] + 1, prob.tau_max);
    }
    rec.channel = std::move(ch);
    ages = rec.channel.tau_next;
    x = std::move(x_next);
    xs = std::move(xs_next);
    xn = std::move(xn_next);
    trace.steps.push_back(std::move(rec));
  }
  return trace;
}

/// Time-average of the recorded per-step rewards.
inline double evaluate_javg(const SimTrace& trace) {
  if (trace.steps.empty()) throw std::invalid_argument("empty trace");
  double acc = 0.0;
  for (const auto& r : trace.steps) acc += r.reward;
  return acc / static_cast<double>(trace.steps.size());
}

struct EnsembleSummary {
  std::string scheduler;
  std::vector<std::uint64_t> seeds;
  std::vector<double> javg;  // per seed, in seed order
  double mean = 0.0;
  double stddev = 0.0;
  double ci_half_width = 0.0;  // 95%, Student t

  double ci_low() const { return mean - ci_half_width; }
  double ci_high() const { return mean + ci_half_width; }
};

inline EnsembleSummary summarize(std::string scheduler, std::vector<std::uint64_t> seeds,
                                 std::vector<double> javg) {
  EnsembleSummary s;
  s.scheduler = std::move(scheduler);
  s.seeds = std::move(seeds);
  s.javg = std::move(javg);
  const double n = static_cast<double>(s.javg.size());
  s.mean = std::accumulate(s.javg.begin(), s.javg.end(), 0.0) / n;
  if (s.javg.size() > 1) {
    double ss = 0.0;
    for (double v : s.javg) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / (n - 1.0));
    boost::math::students_t dist(n - 1.0);
    s.ci_half_width = boost::math::quantile(dist, 0.975) * s.stddev / std::sqrt(n);
  }
  return s;
}

/// Runs one episode per seed. Traces are handed to `sink` (if any) in seed order.
template <typename Sink>
EnsembleSummary run_ensemble(const IndexCache& indices, const Scheduler& scheduler,
                             EpisodeConfig cfg, const std::vector<std::uint64_t>& seeds,
                             Sink&& sink) {
  std::vector<std::uint64_t> sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> javg;
  for (std::uint64_t seed : sorted) {
    cfg.seed = seed;
    SimTrace t = run_episode(indices, scheduler, cfg);
    javg.push_back(evaluate_javg(t));
    sink(t);
  }
  return summarize(scheduler.name(), sorted, std::move(javg));
}

inline EnsembleSummary run_ensemble(const IndexCache& indices, const Scheduler& scheduler,
                                    EpisodeConfig cfg, const std::vector<std::uint64_t>& seeds) {
  return run_ensemble(indices, scheduler, std::move(cfg), seeds, [](const SimTrace&) {});
}

}  // namespace sensched
