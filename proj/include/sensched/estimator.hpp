#pragma once

#include <stdexcept>
#include <vector>

#include "sensched/linalg.hpp"
#include "sensched/model.hpp"

namespace sensched {

/// Per-node covariance upper bounds of the distributed estimator at step k.
struct BoundState {
  MatrixList P;        // posterior bound
  MatrixList P_breve;  // prior bound
  MatrixList K;        // gains
  long k = 0;

  /// P_0 = 0 for every node; the initial state is known exactly.
  static BoundState zero(const NetworkModel& model) {
    BoundState s;
    for (int i = 0; i < model.N; ++i) {
      s.P.push_back(Matrix::Zero(model.n, model.n));
      s.P_breve.push_back(Matrix::Zero(model.n, model.n));
      s.K.push_back(Matrix::Zero(model.n, model.m));
    }
    return s;
  }
};

struct SteadyState {
  MatrixList P;
  MatrixList P_breve;
  MatrixList K;
  long iterations = 0;
  double residual = 0.0;
};

/// Prior-bound propagation shared by the estimator and the age-indexed performance index:
///   A~ Y_i A~^T + d_i sum_{j in N_i} G~ Y_j G~^T + Q_i
inline Matrix propagate_bound(const NetworkModel& model, const TildeMatrices& t, int i,
                              const MatrixList& Y) {
  Matrix out = t.A_tilde * Y[i] * t.A_tilde.transpose() + model.Q[i];
  const double di = model.degree(i);
  for (int j : model.neighbors(i)) out += di * (t.G_tilde * Y[j] * t.G_tilde.transpose());
  return linalg::symmetrized(out);
}

inline BoundState bound_step(const NetworkModel& model, const BoundState& state) {
  if (static_cast<int>(state.P.size()) != model.N)
    throw std::invalid_argument("bound state does not match node count");
  const auto t = tilde_matrices(model);
  BoundState next;
  next.k = state.k + 1;
  next.P.reserve(model.N);
  for (int i = 0; i < model.N; ++i) {
    Matrix prior = propagate_bound(model, t, i, state.P);
    const Matrix info =
        model.C.transpose() * linalg::spd_inverse(model.R[i]) * model.C;
    // Information form; prior > 0 whenever Q_i > 0.
    Matrix post = linalg::spd_inverse(linalg::spd_inverse(prior) + info);
    Matrix innov = model.C * prior * model.C.transpose() + model.R[i];
    Matrix gain = prior * model.C.transpose() * linalg::spd_inverse(innov);
    next.P_breve.push_back(std::move(prior));
    next.P.push_back(linalg::symmetrized(post));
    next.K.push_back(std::move(gain));
  }
  return next;
}

/// Iterates the bound recursion from P_0 = 0 until the max-abs change drops below `tol`.
inline SteadyState solve_steady_state(const NetworkModel& model, double tol = 1e-10,
                                      long max_iter = 100000) {
  require_valid(model);
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  BoundState s = BoundState::zero(model);
  for (long it = 1; it <= max_iter; ++it) {
    BoundState next = bound_step(model, s);
    const double change = std::max(linalg::max_abs_diff(next.P, s.P),
                                   linalg::max_abs_diff(next.P_breve, s.P_breve));
    s = std::move(next);
    if (change < tol) return {s.P, s.P_breve, s.K, it, change};
  }
  throw ConvergenceError("bound recursion did not converge; configuration is likely "
                         "undetectable or unstable");
}

/// One step of the distributed estimator with steady gains:
///   xbar_i = A xhat_i + mu sum_j a_ij G xhat_j,   xhat_i' = xbar_i + K_i (y_i - C xbar_i)
inline std::vector<Vector> estimate_step(const NetworkModel& model, const SteadyState& gains,
                                         const std::vector<Vector>& estimates,
                                         const std::vector<Vector>& measurements) {
  std::vector<Vector> out(model.N);
  for (int i = 0; i < model.N; ++i) {
    Vector prior = model.A * estimates[i];
    for (int j : model.neighbors(i)) prior += model.mu * (model.G * estimates[j]);
    out[i] = prior + gains.K[i] * (measurements[i] - model.C * prior);
  }
  return out;
}

}  // namespace sensched
