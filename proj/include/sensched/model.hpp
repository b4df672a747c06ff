#pragma once

#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "sensched/linalg.hpp"

namespace sensched {

/// Coupled linear network: N identical-structure nodes, each with its own sensor.
///
///   x_{k+1,i} = A x_{k,i} + mu * sum_j a_ij G x_{k,j} + w_{k,i},   w ~ N(0, Q_i)
///   y_{k,i}   = C x_{k,i} + v_{k,i},                               v ~ N(0, R_i)
struct NetworkModel {
  int n = 0;
  int m = 0;
  int N = 0;
  Matrix A;
  Matrix G;
  Matrix C;
  double mu = 0.0;
  Eigen::MatrixXi adjacency;
  MatrixList Q;
  MatrixList R;

  std::vector<int> neighbors(int i) const {
    std::vector<int> out;
    for (int j = 0; j < N; ++j)
      if (adjacency(i, j) != 0) out.push_back(j);
    return out;
  }

  int degree(int i) const { return adjacency.row(i).sum(); }

  int max_degree() const {
    int d = 0;
    for (int i = 0; i < N; ++i) d = std::max(d, degree(i));
    return d;
  }
};

struct TildeMatrices {
  Matrix A_tilde;  // sqrt(1 + mu) A
  Matrix G_tilde;  // sqrt(mu + mu^2) G
};

inline TildeMatrices tilde_matrices(const NetworkModel& model) {
  return {std::sqrt(1.0 + model.mu) * model.A,
          std::sqrt(model.mu + model.mu * model.mu) * model.G};
}

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Collects every violated structural invariant; never throws.
inline ValidationResult validate_model(const NetworkModel& model) {
  ValidationResult res;
  auto fail = [&](std::string msg) { res.violations.push_back(std::move(msg)); };
  const int n = model.n, m = model.m, N = model.N;
  if (n < 1) fail("state dimension n must be positive");
  if (m < 1) fail("measurement dimension m must be positive");
  if (N < 1) fail("node count N must be positive");
  if (!res.ok()) return res;

  auto check_shape = [&](const Matrix& M, int r, int c, const std::string& name) {
    if (M.rows() != r || M.cols() != c)
      fail("dimension mismatch: " + name + " is " + std::to_string(M.rows()) + "x" +
           std::to_string(M.cols()) + ", expected " + std::to_string(r) + "x" +
           std::to_string(c));
  };
  check_shape(model.A, n, n, "A");
  check_shape(model.G, n, n, "G");
  check_shape(model.C, m, n, "C");
  if (!(model.mu >= 0.0) || !std::isfinite(model.mu)) fail("coupling mu must be finite and >= 0");

  if (model.adjacency.rows() != N || model.adjacency.cols() != N) {
    fail("dimension mismatch: adjacency must be NxN");
  } else {
    for (int i = 0; i < N; ++i) {
      if (model.adjacency(i, i) != 0) fail("self-loop at node " + std::to_string(i + 1));
      for (int j = 0; j < N; ++j)
        if (model.adjacency(i, j) != 0 && model.adjacency(i, j) != 1)
          fail("adjacency entry (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
               ") is not binary");
    }
  }

  auto check_cov = [&](const MatrixList& list, int dim, const char* name) {
    if (static_cast<int>(list.size()) != N) {
      fail(std::string(name) + " must hold N matrices");
      return;
    }
    for (int i = 0; i < N; ++i) {
      const std::string tag = std::string(name) + std::to_string(i + 1);
      const Matrix& M = list[i];
      if (M.rows() != dim || M.cols() != dim) {
        fail("dimension mismatch: " + tag);
        continue;
      }
      if (!linalg::is_symmetric(M)) {
        fail(std::string(name) + " not symmetric at node " + std::to_string(i + 1));
        continue;
      }
      // Strictly positive spectrum; tiny-noise scenarios (1e-12 I) must still pass.
      if (!(linalg::min_eigenvalue(M) > 0.0))
        fail(std::string(name) + " not positive definite at node " + std::to_string(i + 1));
    }
  };
  check_cov(model.Q, n, "Q");
  check_cov(model.R, m, "R");
  return res;
}

inline void require_valid(const NetworkModel& model) {
  auto res = validate_model(model);
  if (!res.ok()) throw std::invalid_argument("invalid model: " + res.violations.front());
}

/// U^T U = A~^T A~ + d_m^2 G~^T G~. U itself is never formed.
inline Matrix compute_u_gram(const NetworkModel& model) {
  const auto t = tilde_matrices(model);
  const double dm = model.max_degree();
  Matrix g = t.A_tilde.transpose() * t.A_tilde + dm * dm * t.G_tilde.transpose() * t.G_tilde;
  return linalg::symmetrized(g);
}

struct FeasibilityReport {
  double rho = 0.0;
  int r = 1;
  double value = 0.0;
  bool feasible = false;
};

/// Existence certificate for an optimal stationary schedule: (1 - lambda) rho(U)^{2r} < 1,
/// with r = ceil(N / M).
inline FeasibilityReport check_feasibility(const NetworkModel& model, double lambda, int M) {
  if (M < 1 || M > model.N) throw std::invalid_argument("M must satisfy 1 <= M <= N");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in (0, 1]");
  FeasibilityReport rep;
  rep.rho = std::sqrt(std::max(0.0, linalg::max_eigenvalue(compute_u_gram(model))));
  rep.r = (model.N + M - 1) / M;
  rep.value = (1.0 - lambda) * std::pow(rep.rho, 2 * rep.r);
  rep.feasible = rep.value < 1.0;
  return rep;
}

/// Hautus test: every eigenvalue of A with |s| >= 1 must leave [A - sI; C] at full column rank.
inline bool is_detectable(const Matrix& A, const Matrix& C, double tol = 1e-9) {
  const int n = static_cast<int>(A.rows());
  Eigen::EigenSolver<Matrix> es(A, false);
  using CMatrix = Eigen::MatrixXcd;
  for (int k = 0; k < n; ++k) {
    const std::complex<double> s = es.eigenvalues()(k);
    if (std::abs(s) < 1.0 - 1e-12) continue;
    CMatrix stacked(n + C.rows(), n);
    stacked.topRows(n) = A.cast<std::complex<double>>() - s * CMatrix::Identity(n, n);
    stacked.bottomRows(C.rows()) = C.cast<std::complex<double>>();
    Eigen::JacobiSVD<CMatrix> svd(stacked);
    const auto& sv = svd.singularValues();
    const double scale = std::max(1.0, sv(0));
    if (sv(n - 1) <= tol * scale) return false;
  }
  return true;
}

/// Steady-state filter gain for (A, C, Q, R) via Riccati iteration on the prior covariance.
inline Matrix steady_filter_gain(const Matrix& A, const Matrix& C, const Matrix& Q,
                                 const Matrix& R, int max_iter = 100000, double tol = 1e-12) {
  Matrix prior = Q;
  for (int it = 0; it < max_iter; ++it) {
    Matrix S = C * prior * C.transpose() + R;
    Matrix K = prior * C.transpose() * linalg::spd_inverse(S);
    Matrix post = linalg::symmetrized(prior - K * C * prior);
    Matrix next = linalg::symmetrized(A * post * A.transpose() + Q);
    const double change = linalg::max_abs_diff(next, prior);
    prior = std::move(next);
    if (change < tol * std::max(1.0, linalg::max_abs(prior))) {
      Matrix S2 = C * prior * C.transpose() + R;
      return prior * C.transpose() * linalg::spd_inverse(S2);
    }
  }
  throw ConvergenceError("filter Riccati iteration did not converge");
}

struct CouplingBoundReport {
  Matrix L;
  Matrix theta;
  int iterations = 0;
  double residual = 0.0;
  double closed_loop_radius = 0.0;  // rho((I - L C) A~)
  double g_norm = 0.0;              // ||G||_2
  double bound = 0.0;               // sqrt(z / (d_m^2 (mu + mu^2) lambda_max(theta)))
  bool holds = false;
};

/// Practical bounded-convergence test for the bound recursion.
///
/// Requires (C, A~) detectable. When `L` is empty a gain is synthesized as the steady
/// filter gain for (A~, C, Q_m, R_m) with Q_m = max_i lambda_max(Q_i) I and
/// R_m = max_i lambda_max(R_i) I. Theta is the fixed point of
///   Theta = (I - L C)(A~ Theta A~^T + z I + Q_m)(I - L C)^T + L R_m L^T
/// iterated from zero.
inline CouplingBoundReport check_coupling_bound(const NetworkModel& model, double z,
                                           const Matrix& L_in = Matrix(),
                                           int max_iter = 100000, double tol = 1e-9) {
  require_valid(model);
  if (!(z > 0.0)) throw std::invalid_argument("z must be positive");
  const auto t = tilde_matrices(model);
  const int n = model.n;
  if (!is_detectable(t.A_tilde, model.C))
    throw std::domain_error("(C, A~) is not detectable");

  double qmax = 0.0, rmax = 0.0;
  for (const auto& q : model.Q) qmax = std::max(qmax, linalg::max_eigenvalue(q));
  for (const auto& r : model.R) rmax = std::max(rmax, linalg::max_eigenvalue(r));
  const Matrix Qm = qmax * Matrix::Identity(n, n);
  const Matrix Rm = rmax * Matrix::Identity(model.m, model.m);

  CouplingBoundReport rep;
  rep.L = L_in.size() == 0 ? steady_filter_gain(t.A_tilde, model.C, Qm, Rm) : L_in;
  if (rep.L.rows() != n || rep.L.cols() != model.m)
    throw std::invalid_argument("L must be n x m");
  const Matrix F = Matrix::Identity(n, n) - rep.L * model.C;
  rep.closed_loop_radius = linalg::spectral_radius(F * t.A_tilde);
  if (rep.closed_loop_radius >= 1.0) throw std::domain_error("L not stabilizing");

  const Matrix drive = Qm + z * Matrix::Identity(n, n);
  const Matrix noise = rep.L * Rm * rep.L.transpose();
  Matrix theta = Matrix::Zero(n, n);
  bool converged = false;
  for (int it = 1; it <= max_iter; ++it) {
    Matrix next = linalg::symmetrized(
        F * (t.A_tilde * theta * t.A_tilde.transpose() + drive) * F.transpose() + noise);
    rep.residual = linalg::max_abs_diff(next, theta);
    theta = std::move(next);
    rep.iterations = it;
    if (rep.residual < tol) {
      converged = true;
      break;
    }
  }
  if (!converged) throw ConvergenceError("theta fixed-point iteration did not converge");
  rep.theta = theta;

  rep.g_norm = linalg::spectral_norm(model.G);
  const double dm = model.max_degree();
  const double denom = dm * dm * (model.mu + model.mu * model.mu) * linalg::max_eigenvalue(theta);
  rep.bound = denom > 0.0 ? std::sqrt(z / denom) : std::numeric_limits<double>::infinity();
  rep.holds = rep.g_norm <= rep.bound;
  return rep;
}

inline bool is_strongly_connected(const Eigen::MatrixXi& adjacency) {
  const int N = static_cast<int>(adjacency.rows());
  auto reach_all = [&](bool transpose) {
    std::vector<char> seen(N, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int v = 0; v < N; ++v) {
        int e = transpose ? adjacency(v, u) : adjacency(u, v);
        if (e != 0 && !seen[v]) {
          seen[v] = 1;
          q.push(v);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
  };
  return N <= 1 || (reach_all(false) && reach_all(true));
}

/// Identical noise covariances on every node and a strongly connected graph.
inline bool has_identical_nodes(const NetworkModel& model, double tol = 1e-12) {
  for (int i = 1; i < model.N; ++i) {
    if (linalg::max_abs_diff(model.Q[i], model.Q[0]) > tol) return false;
    if (linalg::max_abs_diff(model.R[i], model.R[0]) > tol) return false;
  }
  return is_strongly_connected(model.adjacency);
}

}  // namespace sensched
