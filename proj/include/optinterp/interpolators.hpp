#pragma once

#include <string>

#include "optinterp/numerics.hpp"

namespace optinterp {

/// Response-linear estimator w = Q y with Q stored explicitly (d x n).
struct LinearEstimator {
  Matrix q;
  std::string label;
};

/// Estimate that needs oracle access to w* and xi (not response-linear).
struct OracleEstimate {
  Vector w;
  std::string label;
};

/// Q = X^+ = X^T (X X^T)^{-1}.
LinearEstimator min_norm(const Matrix& x);

/// Q = Sigma^{-1/2} (X Sigma^{-1/2})^+ = Sigma^{-1} X^T (X Sigma^{-1} X^T)^{-1}.
LinearEstimator best_variance(const Matrix& x, const SpdMatrix& sigma);

/// Q = Phi X^T (X Phi X^T)^{-1}; optimal bias among response-linear interpolators.
LinearEstimator optimal_bias(const Matrix& x, const SpdMatrix& phi);

/// The risk-optimal response-linear interpolator
///
///   Q = ((delta/d) Phi X^T + Sigma^{-1} X^T (X Sigma^{-1} X^T)^{-1})
///       * (I_n + (delta/d) X Phi X^T)^{-1}
///
/// with d = X.cols(). delta = 0 dispatches to best_variance and delta = +inf
/// to optimal_bias, which are the two limits of the expression.
LinearEstimator optimal_response_linear(const Matrix& x, const SpdMatrix& sigma,
                                        const SpdMatrix& phi, double delta);

/// W_b = w* + Sigma^{-1/2} (X Sigma^{-1/2})^+ xi. Interpolates y = X w* + xi.
OracleEstimate best_possible(const Matrix& x, const SpdMatrix& sigma, const Vector& w_star,
                             const Vector& xi);

Vector apply(const LinearEstimator& e, const Vector& y);

/// Sigma^{-1} X^T (X Sigma^{-1} X^T)^{-1}, the noise-fitting operator shared
/// by best_variance, optimal_response_linear and best_possible.
Matrix variance_optimal_operator(const Matrix& x, const SpdMatrix& sigma);

}  // namespace optinterp
