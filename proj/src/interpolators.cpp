#include "optinterp/interpolators.hpp"

#include <cmath>
#include <string>

namespace optinterp {

namespace {

void check_design(const Matrix& x, const char* what) {
  require_finite(x, what);
  if (x.rows() < 1 || x.cols() < x.rows()) {
    throw DimensionMismatch(std::string(what) + ": X must be n x d with 1 <= n <= d, got " +
                            std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
  }
}

void check_dim(const Matrix& x, const SpdMatrix& s, const char* what) {
  if (s.dim() != x.cols()) {
    throw DimensionMismatch(std::string(what) + ": matrix is " + std::to_string(s.dim()) +
                            "-dimensional but X has " + std::to_string(x.cols()) + " columns");
  }
}

// P X^T (X P X^T)^{-1} for an SPD matrix P given through its action.
Matrix oblique_right_inverse(const Matrix& x, const Matrix& p_xt, const char* what) {
  Matrix k = x * p_xt;
  k = 0.5 * (k + k.transpose());
  const auto llt = factor_gram(k, what);
  return llt.solve(p_xt.transpose()).transpose();
}

}  // namespace

Matrix variance_optimal_operator(const Matrix& x, const SpdMatrix& sigma) {
  check_design(x, "best_variance");
  check_dim(x, sigma, "best_variance");
  return oblique_right_inverse(x, sigma.solve(x.transpose()), "best_variance");
}

LinearEstimator min_norm(const Matrix& x) {
  check_design(x, "min_norm");
  const auto llt = factor_gram(gram(x), "min_norm");
  return {llt.solve(x).transpose(), "min_norm"};
}

LinearEstimator best_variance(const Matrix& x, const SpdMatrix& sigma) {
  return {variance_optimal_operator(x, sigma), "best_variance"};
}

LinearEstimator optimal_bias(const Matrix& x, const SpdMatrix& phi) {
  check_design(x, "optimal_bias");
  check_dim(x, phi, "optimal_bias");
  return {oblique_right_inverse(x, phi.multiply(x.transpose()), "optimal_bias"), "optimal_bias"};
}

LinearEstimator optimal_response_linear(const Matrix& x, const SpdMatrix& sigma,
                                        const SpdMatrix& phi, double delta) {
  if (std::isnan(delta) || delta < 0.0) {
    throw InvalidParams("optimal_response_linear: delta must be in [0, +inf]");
  }
  if (delta == 0.0) return {best_variance(x, sigma).q, "optimal_response_linear"};
  if (std::isinf(delta)) return {optimal_bias(x, phi).q, "optimal_response_linear"};

  check_dim(x, phi, "optimal_response_linear");
  const Matrix noise_fit = variance_optimal_operator(x, sigma);
  const double c = delta / static_cast<double>(x.cols());
  const Matrix phi_xt = phi.multiply(x.transpose());

  Matrix m = c * (x * phi_xt);
  m = 0.5 * (m + m.transpose());
  m.diagonal().array() += 1.0;
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("optimal_response_linear: I + (delta/d) X Phi X^T not SPD");
  }
  const Matrix left = c * phi_xt + noise_fit;
  // left * M^{-1} = (M^{-1} left^T)^T since M is symmetric.
  return {llt.solve(left.transpose()).transpose(), "optimal_response_linear"};
}

OracleEstimate best_possible(const Matrix& x, const SpdMatrix& sigma, const Vector& w_star,
                             const Vector& xi) {
  if (w_star.size() != x.cols() || xi.size() != x.rows()) {
    throw DimensionMismatch("best_possible: w* or xi has the wrong length");
  }
  const Matrix noise_fit = variance_optimal_operator(x, sigma);
  return {w_star + noise_fit * xi, "best_possible"};
}

Vector apply(const LinearEstimator& e, const Vector& y) {
  if (e.q.cols() != y.size()) {
    throw DimensionMismatch("apply: Q has " + std::to_string(e.q.cols()) + " columns, y has " +
                            std::to_string(y.size()) + " entries");
  }
  return e.q * y;
}

}  // namespace optinterp
