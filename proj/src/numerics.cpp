#include "optinterp/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace optinterp {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

bool off_diagonal_is_zero(const Matrix& m) {
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index i = 0; i < m.rows(); ++i) {
      if (i != j && m(i, j) != 0.0) return false;
    }
  }
  return true;
}

Matrix spectral_function(const SpdMatrix& s, double power) {
  if (s.is_diagonal()) {
    Vector d = s.diagonal_entries().array().pow(power);
    return d.asDiagonal();
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(s.matrix());
  if (es.info() != Eigen::Success) {
    throw NotPositiveDefinite("eigendecomposition failed");
  }
  Vector values = es.eigenvalues().array().pow(power);
  Matrix out = es.eigenvectors() * values.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace

void require_finite(const Eigen::Ref<const Matrix>& m, std::string_view what) {
  if (!m.allFinite()) {
    throw NonFiniteInput(std::string(what) + ": non-finite entry");
  }
}

SpdMatrix::SpdMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) {
    throw DimensionMismatch("SpdMatrix: matrix is " + std::to_string(m_.rows()) + "x" +
                            std::to_string(m_.cols()));
  }
  if (m_.rows() == 0) throw InvalidParams("SpdMatrix: empty matrix");
  require_finite(m_, "SpdMatrix");

  const double scale = m_.cwiseAbs().maxCoeff();
  const double asym = (m_ - m_.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) {
    throw NotPositiveDefinite("SpdMatrix: asymmetric (max |A - A^T| = " + std::to_string(asym) +
                              ")");
  }
  m_ = 0.5 * (m_ + m_.transpose());
  diagonal_ = off_diagonal_is_zero(m_);

  const double dim = static_cast<double>(m_.rows());
  double lmin = 0.0;
  double lmax = 0.0;
  if (diagonal_) {
    lmin = m_.diagonal().minCoeff();
    lmax = m_.diagonal().maxCoeff();
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m_, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NotPositiveDefinite("SpdMatrix: eigensolver failed");
    lmin = es.eigenvalues().minCoeff();
    lmax = es.eigenvalues().maxCoeff();
  }
  if (!(lmax > 0.0) || lmin <= dim * kEps * lmax) {
    throw NotPositiveDefinite("SpdMatrix: lambda_min = " + std::to_string(lmin) +
                              ", lambda_max = " + std::to_string(lmax));
  }
  factor();
}

SpdMatrix::SpdMatrix(Matrix m, Unchecked) : m_(std::move(m)) {
  m_ = 0.5 * (m_ + m_.transpose());
  diagonal_ = off_diagonal_is_zero(m_);
  factor();
}

void SpdMatrix::factor() {
  if (diagonal_) {
    if ((m_.diagonal().array() <= 0.0).any()) {
      throw NotPositiveDefinite("SpdMatrix: non-positive diagonal entry");
    }
    return;
  }
  auto llt = std::make_shared<Eigen::LLT<Matrix>>(m_);
  if (llt->info() != Eigen::Success) {
    throw NotPositiveDefinite("SpdMatrix: Cholesky factorization failed");
  }
  llt_ = std::move(llt);
}

SpdMatrix SpdMatrix::identity(Index dim) {
  return SpdMatrix(Matrix::Identity(dim, dim), Unchecked{});
}

SpdMatrix SpdMatrix::diagonal(const Vector& entries) {
  return SpdMatrix(Matrix(entries.asDiagonal()));
}

SpdMatrix SpdMatrix::assume_spd(Matrix m) {
  require_finite(m, "SpdMatrix::assume_spd");
  if (m.rows() != m.cols()) throw DimensionMismatch("SpdMatrix::assume_spd: not square");
  return SpdMatrix(std::move(m), Unchecked{});
}

Matrix SpdMatrix::solve(const Eigen::Ref<const Matrix>& rhs) const {
  if (rhs.rows() != dim()) {
    throw DimensionMismatch("SpdMatrix::solve: rhs has " + std::to_string(rhs.rows()) +
                            " rows, expected " + std::to_string(dim()));
  }
  if (diagonal_) return m_.diagonal().cwiseInverse().asDiagonal() * rhs;
  return llt_->solve(rhs);
}

Matrix SpdMatrix::multiply(const Eigen::Ref<const Matrix>& rhs) const {
  if (rhs.rows() != dim()) {
    throw DimensionMismatch("SpdMatrix::multiply: rhs has " + std::to_string(rhs.rows()) +
                            " rows, expected " + std::to_string(dim()));
  }
  if (diagonal_) return m_.diagonal().asDiagonal() * rhs;
  return m_ * rhs;
}

Matrix SpdMatrix::inverse() const {
  if (diagonal_) return Matrix(m_.diagonal().cwiseInverse().asDiagonal());
  Matrix inv = llt_->solve(Matrix::Identity(dim(), dim()));
  return 0.5 * (inv + inv.transpose());
}

Matrix pinv(const Matrix& m) {
  require_finite(m, "pinv");
  if (m.size() == 0) return Matrix(m.cols(), m.rows());
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  if (smax == 0.0) return Matrix::Zero(m.cols(), m.rows());
  const double cutoff = static_cast<double>(std::max(m.rows(), m.cols())) * kEps * smax;
  Vector inv(s.size());
  for (Index i = 0; i < s.size(); ++i) inv(i) = s(i) > cutoff ? 1.0 / s(i) : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

SpdMatrix inv_sqrt(const SpdMatrix& s) { return SpdMatrix::assume_spd(spectral_function(s, -0.5)); }

SpdMatrix sqrt_spd(const SpdMatrix& s) { return SpdMatrix::assume_spd(spectral_function(s, 0.5)); }

Matrix whiten(const Matrix& x, const SpdMatrix& sigma) {
  if (x.cols() != sigma.dim()) {
    throw DimensionMismatch("whiten: X has " + std::to_string(x.cols()) + " columns, Sigma is " +
                            std::to_string(sigma.dim()) + "-dimensional");
  }
  require_finite(x, "whiten");
  if (sigma.is_diagonal()) {
    return x * sigma.diagonal_entries().cwiseSqrt().cwiseInverse().asDiagonal();
  }
  return x * inv_sqrt(sigma).matrix();
}

Matrix gram(const Matrix& x) {
  Matrix g = Matrix::Zero(x.rows(), x.rows());
  g.selfadjointView<Eigen::Lower>().rankUpdate(x);
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g;
}

Matrix weighted_gram(const Matrix& x, const Vector& weights) {
  if (weights.size() != x.cols()) throw DimensionMismatch("weighted_gram: weight length");
  if ((weights.array() >= 0.0).all()) {
    Matrix scaled = x * weights.cwiseSqrt().asDiagonal();
    return gram(scaled);
  }
  Matrix g = x * weights.asDiagonal() * x.transpose();
  return 0.5 * (g + g.transpose());
}

Eigen::LLT<Matrix> factor_gram(const Matrix& g, std::string_view what) {
  Eigen::LLT<Matrix> llt(g);
  if (llt.info() != Eigen::Success) {
    throw RankDeficient(std::string(what) + ": Gram matrix is singular");
  }
  const double max_diag = g.diagonal().cwiseAbs().maxCoeff();
  const Vector pivots = Matrix(llt.matrixL()).diagonal().array().square();
  const double threshold = static_cast<double>(g.rows()) * kEps * max_diag;
  if (max_diag == 0.0 || pivots.minCoeff() <= threshold) {
    throw RankDeficient(std::string(what) + ": numerical rank below row count");
  }
  return llt;
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

double max_eigenvalue(const Matrix& symmetric) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double pairwise_sum(const double* values, std::size_t count) {
  if (count <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < count; ++i) s += values[i];
    return s;
  }
  const std::size_t half = count / 2;
  return pairwise_sum(values, half) + pairwise_sum(values + half, count - half);
}

}  // namespace optinterp
