#pragma once

#include <Eigen/Dense>

#include <memory>
#include <string_view>

#include "optinterp/error.hpp"

namespace optinterp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Throws NonFiniteInput if any entry of `m` is NaN or infinite.
void require_finite(const Eigen::Ref<const Matrix>& m, std::string_view what);

/// Symmetric positive definite matrix.
///
/// Construction checks symmetry (1e-12 relative) and that every eigenvalue
/// exceeds dim * eps * lambda_max. The matrix is stored symmetrized together
/// with its Cholesky factor, so repeated solves against the same covariance
/// (one population Sigma shared by many replicates) do not refactor.
/// Instances are immutable and safe to share between threads.
class SpdMatrix {
 public:
  explicit SpdMatrix(Matrix m);

  static SpdMatrix identity(Index dim);
  static SpdMatrix diagonal(const Vector& entries);

  /// Skips the eigenvalue test. Only for matrices that are SPD by
  /// construction (functions of an already validated SpdMatrix).
  static SpdMatrix assume_spd(Matrix m);

  Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  bool is_diagonal() const { return diagonal_; }
  Vector diagonal_entries() const { return m_.diagonal(); }
  double trace() const { return m_.trace(); }

  /// S^{-1} * rhs.
  Matrix solve(const Eigen::Ref<const Matrix>& rhs) const;
  /// S * rhs, with a fast path for diagonal S.
  Matrix multiply(const Eigen::Ref<const Matrix>& rhs) const;
  Matrix inverse() const;

 private:
  struct Unchecked {};
  SpdMatrix(Matrix m, Unchecked);
  void factor();

  Matrix m_;
  bool diagonal_ = false;
  std::shared_ptr<const Eigen::LLT<Matrix>> llt_;
};

/// Moore-Penrose pseudoinverse via SVD. Singular values below
/// max(rows, cols) * eps * sigma_max are treated as zero.
Matrix pinv(const Matrix& m);

/// S^{-1/2} from the symmetric eigendecomposition.
SpdMatrix inv_sqrt(const SpdMatrix& s);

/// S^{1/2} from the symmetric eigendecomposition.
SpdMatrix sqrt_spd(const SpdMatrix& s);

/// X * Sigma^{-1/2}.
Matrix whiten(const Matrix& x, const SpdMatrix& sigma);

/// X * X^T as a full symmetric matrix (computed with a rank-k update).
Matrix gram(const Matrix& x);

/// X * diag(w) * X^T.
Matrix weighted_gram(const Matrix& x, const Vector& weights);

/// Cholesky factor of a Gram-type matrix. Throws RankDeficient when the
/// factorization fails or a pivot falls below rows * eps * max diagonal.
Eigen::LLT<Matrix> factor_gram(const Matrix& g, std::string_view what);

/// Largest singular value.
double spectral_norm(const Matrix& m);

/// Largest eigenvalue of a symmetric matrix.
double max_eigenvalue(const Matrix& symmetric);

/// Sum of `values` by pairwise reduction; result does not depend on thread
/// scheduling, only on the order of the input.
double pairwise_sum(const double* values, std::size_t count);

}  // namespace optinterp
