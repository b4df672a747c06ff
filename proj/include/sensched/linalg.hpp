#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace sensched {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixList = std::vector<Matrix>;

/// Thrown when a fixed-point iteration does not settle within its cap.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace linalg {

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) { return max_abs(a - b); }

inline double max_abs_diff(const MatrixList& a, const MatrixList& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, max_abs_diff(a[i], b[i]));
  return d;
}

inline bool is_symmetric(const Matrix& m, double tol = 1e-10) {
  return m.rows() == m.cols() && max_abs_diff(m, m.transpose()) <= tol;
}

/// Eigenvalues of the symmetric part, ascending.
inline Vector sym_eigenvalues(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double min_eigenvalue(const Matrix& m) { return sym_eigenvalues(m).minCoeff(); }
inline double max_eigenvalue(const Matrix& m) { return sym_eigenvalues(m).maxCoeff(); }

inline bool is_positive_definite(const Matrix& m, double tol = 1e-10) {
  return is_symmetric(m) && min_eigenvalue(m) > tol;
}

inline double spectral_radius(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
inline Matrix spd_inverse(const Matrix& m) {
  Eigen::LLT<Matrix> llt(symmetrized(m));
  if (llt.info() != Eigen::Success) throw std::domain_error("matrix is not positive definite");
  return llt.solve(Matrix::Identity(m.rows(), m.cols()));
}

}  // namespace linalg
}  // namespace sensched
