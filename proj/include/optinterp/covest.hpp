#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "optinterp/interpolators.hpp"
#include "optinterp/model.hpp"

namespace optinterp {

struct GlassoConfig {
  double alpha = 0.25;
  std::size_t max_sweeps = 100;
  double dual_gap_tol = 1e-4;
  bool penalize_diagonal = false;
  /// Use X^T X / n instead of the column-centered sample covariance.
  bool no_center = false;
  /// Inner coordinate descent limits for each column's lasso subproblem.
  std::size_t lasso_max_iters = 100;
  double lasso_tol = 1e-4;
};

struct GlassoResult {
  Matrix covariance;
  Matrix precision;
  std::size_t sweeps = 0;
  double dual_gap = 0.0;
  bool converged = false;
};

/// Thrown when max_sweeps is reached before the duality gap closes.
class GlassoNotConverged : public NotConverged {
 public:
  GlassoNotConverged(GlassoResult partial, const std::string& what)
      : NotConverged(what), partial_(std::move(partial)) {}
  const GlassoResult& partial() const { return partial_; }

 private:
  GlassoResult partial_;
};

/// Sample covariance X^T X / n, optionally after removing column means.
Matrix sample_covariance(const Matrix& x, bool center = true);

/// Penalized Gaussian maximum likelihood
///   max  log det T - tr(S T) - alpha * sum_{i != j} |T_ij|
/// by block coordinate descent over columns of W = T^{-1}.
GlassoResult graphical_lasso_fit(const Matrix& x, const GlassoConfig& cfg = {});
SpdMatrix graphical_lasso(const Matrix& x, const GlassoConfig& cfg = {});

/// Ledoit-Wolf shrinkage toward (tr(S)/d) I with the analytic intensity.
SpdMatrix ledoit_wolf(const Matrix& x, bool center = true);
/// Shrinkage intensity used by ledoit_wolf, in [0, 1].
double ledoit_wolf_shrinkage(const Matrix& x, bool center = true);

/// X^T X / n + lambda I.
SpdMatrix ridge_empirical(const Matrix& x, double lambda);

struct SnrCvConfig {
  std::vector<double> grid = default_grid();
  double holdout_fraction = 0.1;
  std::size_t repeats = 10;
  /// Re-estimate Sigma_e on each training split with `refit` when set.
  bool refit_per_fold = false;

  static std::vector<double> default_grid();
  void validate() const;
};

struct HoldoutSplit {
  std::vector<Index> train;
  std::vector<Index> test;
};

/// `repeats` random splits of n rows, each holding out ceil(fraction * n).
std::vector<HoldoutSplit> holdout_splits(Index n, double holdout_fraction, std::size_t repeats,
                                         Rng& rng);

struct CvResult {
  double delta = 0.0;
  /// Mean held-out squared error per grid point.
  std::vector<double> errors;
};

using CovarianceEstimator = std::function<SpdMatrix(const Matrix&)>;

/// Chooses delta_e from the grid by held-out prediction error of the
/// estimator optimal_response_linear(X_train, Sigma_e, Phi_hat, delta).
/// The same splits are used for every grid point. `refit` is required
/// when cfg.refit_per_fold is set.
CvResult cross_validate_delta(const Matrix& x, const Vector& y, const SpdMatrix& sigma_e,
                              const SpdMatrix& phi_hat, const SnrCvConfig& cfg, Rng& rng,
                              const CovarianceEstimator& refit = {});

/// ((delta/d) X^T + Sigma_e^{-1} X^T (X Sigma_e^{-1} X^T)^{-1}) (I + (delta/d) X X^T)^{-1}.
LinearEstimator w_Oe(const Matrix& x, const SpdMatrix& sigma_e, double delta_e);

/// General-prior version with Phi_hat in place of I.
LinearEstimator w_Oe_phi(const Matrix& x, const SpdMatrix& sigma_e, double delta_e,
                         const SpdMatrix& phi_hat);

enum class CovarianceMethod { GraphicalLasso, LedoitWolf, Ridge, Oracle };

struct EmpiricalConfig {
  CovarianceMethod method = CovarianceMethod::GraphicalLasso;
  GlassoConfig glasso;
  double ridge_lambda = 1.0;
  SnrCvConfig cv;
};

struct EmpiricalFit {
  LinearEstimator estimator;
  SpdMatrix sigma_e;
  double delta_e = 0.0;
};

/// Estimates Sigma_e from X, picks delta_e by cross-validation and builds
/// w_Oe (or w_Oe_phi when phi_hat is given). `oracle_sigma` is used only
/// for CovarianceMethod::Oracle.
EmpiricalFit fit_empirical(const Matrix& x, const Vector& y, const EmpiricalConfig& cfg, Rng& rng,
                           const SpdMatrix* phi_hat = nullptr,
                           const SpdMatrix* oracle_sigma = nullptr);

}  // namespace optinterp
