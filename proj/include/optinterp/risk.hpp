#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>

#include "optinterp/interpolators.hpp"
#include "optinterp/model.hpp"

namespace optinterp {

/// (w - w*)^T Sigma (w - w*).
double excess_risk(const Vector& w, const Vector& w_star, const SpdMatrix& sigma);

/// E_xi of the excess risk of w = Q y given X and w*:
///   ||(QX - I) w*||_Sigma^2 + sigma2 tr(Sigma Q Q^T).
double conditional_expected_excess_risk(const Matrix& q, const Matrix& x, const Vector& w_star,
                                        const SpdMatrix& sigma, double sigma2);

struct BiasVariance {
  double bias = 0.0;
  double variance = 0.0;
};

/// B = (r2/d) tr(Sigma (QX - I) Phi (QX - I)^T), V = sigma2 tr(Sigma Q Q^T), d = X.cols().
BiasVariance bias_variance(const Matrix& q, const Matrix& x, const SpdMatrix& sigma,
                           const SpdMatrix& phi, double r2, double sigma2);

/// sigma2 tr((X Sigma^{-1} X^T)^{-1}), the xi-average risk of the best possible interpolator.
double expected_excess_risk_best_possible(const Matrix& x, const SpdMatrix& sigma, double sigma2);

/// ||X w - y|| <= tol * max(||y||, 1).
bool is_interpolator(const Vector& w, const Matrix& x, const Vector& y, double tol = 1e-8);

/// Output of an estimator built for one instance. Response-linear estimators
/// carry Q and are scored in closed form over xi; the others carry only w.
struct FittedEstimator {
  std::optional<Matrix> q;
  Vector w;
  std::string label;

  static FittedEstimator linear(LinearEstimator e, const Vector& y);
  static FittedEstimator oracle(OracleEstimate e);
};

struct ReplicateRisk {
  double excess_risk = 0.0;
  std::optional<double> bias;
  std::optional<double> variance;
};

/// Scores one fitted estimator on its instance. Bias and variance are
/// filled for response-linear estimators when requested.
ReplicateRisk evaluate(const FittedEstimator& fitted, const ProblemInstance& inst,
                       bool with_bias_variance);

struct RiskReport {
  double excess_risk = 0.0;
  std::optional<double> bias;
  std::optional<double> variance;
  double stderr_ = 0.0;
  std::size_t replicates = 0;
  std::size_t failures = 0;
};

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// Mean and sample standard deviation / sqrt(count), summed pairwise.
MeanStderr mean_stderr(const std::vector<double>& values);

using EstimatorFactory = std::function<FittedEstimator(const ProblemInstance&, Rng&)>;

struct MonteCarloOptions {
  bool with_bias_variance = false;
  unsigned threads = 1;
};

/// Averages the risk of `factory` over fresh instances. Replicate i draws
/// from make_rng(seed, i), so the report does not depend on thread count.
/// Failed replicates are counted and skipped.
RiskReport monte_carlo_expected_risk(const EstimatorFactory& factory, const ProblemConfig& config,
                                     const CovarianceSpec& sigma_spec, const PriorSpec& phi_spec,
                                     std::size_t replicates, std::uint64_t seed,
                                     const MonteCarloOptions& opts = {});

}  // namespace optinterp
