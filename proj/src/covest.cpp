#include "optinterp/covest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace optinterp {

namespace {

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

// Coordinate descent for  min 0.5 b^T W11 b - s12^T b + alpha |b|_1,
// where W11 is W with row and column j removed. `b` and `h` are full-length
// with b(j) = 0 and h = W b kept in sync.
void lasso_column(const Matrix& w, const Matrix& s, Index j, double alpha, Vector& b, Vector& h,
                  std::size_t max_iters, double tol) {
  const Index d = w.rows();
  for (std::size_t it = 0; it < max_iters; ++it) {
    double max_change = 0.0;
    double max_coef = 0.0;
    for (Index k = 0; k < d; ++k) {
      if (k == j) continue;
      const double wkk = w(k, k);
      const double old = b(k);
      const double rho = s(k, j) - (h(k) - wkk * old);
      const double updated = soft_threshold(rho, alpha) / wkk;
      if (updated != old) {
        h.noalias() += (updated - old) * w.col(k);
        b(k) = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
      max_coef = std::max(max_coef, std::abs(updated));
    }
    if (max_change == 0.0 || max_change <= tol * max_coef) break;
  }
}

double glasso_dual_gap(const Matrix& s, const Matrix& precision, double alpha, bool diag) {
  const double d = static_cast<double>(s.rows());
  double penalty = precision.cwiseAbs().sum();
  if (!diag) penalty -= precision.diagonal().cwiseAbs().sum();
  return s.cwiseProduct(precision).sum() - d + alpha * penalty;
}

void check_samples(const Matrix& x, const char* what) {
  require_finite(x, what);
  if (x.rows() < 2) {
    throw InsufficientData(std::string(what) + ": needs at least 2 samples, got " +
                           std::to_string(x.rows()));
  }
}

}  // namespace

Matrix sample_covariance(const Matrix& x, bool center) {
  if (x.rows() < 1) throw InsufficientData("sample_covariance: no samples");
  const double n = static_cast<double>(x.rows());
  Matrix s;
  if (center) {
    const Matrix xc = x.rowwise() - x.colwise().mean();
    s = gram(xc.transpose()) / n;
  } else {
    s = gram(x.transpose()) / n;
  }
  return s;
}

GlassoResult graphical_lasso_fit(const Matrix& x, const GlassoConfig& cfg) {
  check_samples(x, "graphical_lasso");
  if (!(cfg.alpha >= 0.0) || !std::isfinite(cfg.alpha)) {
    throw InvalidParams("graphical_lasso: alpha must be >= 0");
  }
  if (!(cfg.dual_gap_tol > 0.0)) throw InvalidParams("graphical_lasso: dual_gap_tol must be > 0");
  if (cfg.max_sweeps < 1) throw InvalidParams("graphical_lasso: max_sweeps must be >= 1");

  const Matrix s = sample_covariance(x, !cfg.no_center);
  const Index d = s.cols();
  if ((s.diagonal().array() <= 0.0).any()) {
    throw SingularSample("graphical_lasso: a feature has zero sample variance");
  }

  if (cfg.alpha == 0.0) {
    Eigen::LLT<Matrix> llt(s);
    const double max_diag = s.diagonal().maxCoeff();
    if (llt.info() != Eigen::Success ||
        Matrix(llt.matrixL()).diagonal().array().square().minCoeff() <=
            static_cast<double>(d) * 1e-12 * max_diag) {
      throw SingularSample("graphical_lasso: alpha = 0 with a singular sample covariance");
    }
    GlassoResult out;
    out.covariance = s;
    out.precision = llt.solve(Matrix::Identity(d, d));
    out.converged = true;
    return out;
  }

  Matrix w = 0.95 * s;
  w.diagonal() = s.diagonal();
  if (cfg.penalize_diagonal) w.diagonal().array() += cfg.alpha;

  GlassoResult out;
  out.precision = Matrix::Zero(d, d);
  if (d == 1) {
    out.covariance = w;
    out.precision(0, 0) = 1.0 / w(0, 0);
    out.converged = true;
    return out;
  }

  // Column j of `coefs` holds the lasso solution for column j; warm starts
  // across sweeps. Starting from zero keeps the first sweep sparse.
  Matrix coefs = Matrix::Zero(d, d);
  Vector b(d);
  Vector h(d);
  for (std::size_t sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    for (Index j = 0; j < d; ++j) {
      b = coefs.col(j);
      h.setZero();
      for (Index k = 0; k < d; ++k) {
        if (b(k) != 0.0) h.noalias() += b(k) * w.col(k);
      }
      lasso_column(w, s, j, cfg.alpha, b, h, cfg.lasso_max_iters, cfg.lasso_tol);
      coefs.col(j) = b;

      double w12_b = 0.0;
      for (Index k = 0; k < d; ++k) {
        if (k != j && b(k) != 0.0) w12_b += h(k) * b(k);
      }
      const double theta_jj = 1.0 / (w(j, j) - w12_b);
      out.precision.col(j) = -theta_jj * b;
      out.precision.row(j) = out.precision.col(j).transpose();
      out.precision(j, j) = theta_jj;
      for (Index k = 0; k < d; ++k) {
        if (k == j) continue;
        w(k, j) = h(k);
        w(j, k) = h(k);
      }
    }
    out.sweeps = sweep;
    out.dual_gap = glasso_dual_gap(s, out.precision, cfg.alpha, cfg.penalize_diagonal);
    if (!std::isfinite(out.dual_gap)) {
      throw NotPositiveDefinite("graphical_lasso: iteration diverged");
    }
    if (std::abs(out.dual_gap) < cfg.dual_gap_tol) {
      out.converged = true;
      break;
    }
  }
  out.covariance = 0.5 * (w + w.transpose());
  out.precision = 0.5 * (out.precision + out.precision.transpose());
  if (!out.converged) {
    const std::string msg = "graphical_lasso: duality gap " + std::to_string(out.dual_gap) +
                            " after " + std::to_string(out.sweeps) + " sweeps";
    throw GlassoNotConverged(std::move(out), msg);
  }
  return out;
}

SpdMatrix graphical_lasso(const Matrix& x, const GlassoConfig& cfg) {
  return SpdMatrix(graphical_lasso_fit(x, cfg).covariance);
}

double ledoit_wolf_shrinkage(const Matrix& x, bool center) {
  check_samples(x, "ledoit_wolf");
  const double n = static_cast<double>(x.rows());
  const double d = static_cast<double>(x.cols());
  const Matrix xc = center ? Matrix(x.rowwise() - x.colwise().mean()) : x;

  const Vector row_sq = xc.rowwise().squaredNorm();
  const Vector col_var = xc.colwise().squaredNorm().transpose() / n;
  const double mu = col_var.sum() / d;
  // ||X^T X||_F^2 = ||X X^T||_F^2, which is the cheaper side when d > n.
  const double gram_fro = x.rows() <= x.cols() ? gram(xc).squaredNorm()
                                               : gram(xc.transpose()).squaredNorm();
  const double delta_raw = gram_fro / (n * n);
  double beta = (row_sq.squaredNorm() / n - delta_raw) / (d * n);
  const double delta = (delta_raw - 2.0 * mu * col_var.sum() + d * mu * mu) / d;
  beta = std::min(beta, delta);
  if (beta <= 0.0 || delta <= 0.0) return 0.0;
  return std::clamp(beta / delta, 0.0, 1.0);
}

SpdMatrix ledoit_wolf(const Matrix& x, bool center) {
  const double shrink = ledoit_wolf_shrinkage(x, center);
  Matrix s = sample_covariance(x, center);
  const double mu = s.trace() / static_cast<double>(s.rows());
  s *= 1.0 - shrink;
  s.diagonal().array() += shrink * mu;
  return SpdMatrix(std::move(s));
}

SpdMatrix ridge_empirical(const Matrix& x, double lambda) {
  require_finite(x, "ridge_empirical");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw InvalidParams("ridge_empirical: lambda must be >= 0");
  }
  if (x.rows() < 1) throw InsufficientData("ridge_empirical: no samples");
  if (lambda == 0.0 && x.cols() > x.rows()) {
    throw NotPositiveDefinite("ridge_empirical: lambda = 0 with d > n is singular");
  }
  Matrix s = sample_covariance(x, false);
  s.diagonal().array() += lambda;
  return SpdMatrix(std::move(s));
}

std::vector<double> SnrCvConfig::default_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 10; ++i) g.push_back(i / 10.0);
  for (int i = 2; i <= 10; ++i) g.push_back(i);
  return g;
}

void SnrCvConfig::validate() const {
  if (grid.empty()) throw InvalidParams("snr cv: grid is empty");
  for (double g : grid) {
    if (!(g > 0.0) || !std::isfinite(g)) throw InvalidParams("snr cv: grid values must be > 0");
  }
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw InvalidParams("snr cv: holdout_fraction must lie in (0, 1)");
  }
  if (repeats < 1) throw InvalidParams("snr cv: repeats must be >= 1");
}

std::vector<HoldoutSplit> holdout_splits(Index n, double holdout_fraction, std::size_t repeats,
                                         Rng& rng) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw InvalidParams("holdout_splits: holdout_fraction must lie in (0, 1)");
  }
  const auto held = static_cast<Index>(std::ceil(holdout_fraction * static_cast<double>(n)));
  if (n - held < 1) {
    throw InsufficientData("holdout_splits: training split would be empty (n = " +
                           std::to_string(n) + ")");
  }
  std::vector<HoldoutSplit> splits(repeats);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (auto& split : splits) {
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    split.test.assign(perm.begin(), perm.begin() + held);
    split.train.assign(perm.begin() + held, perm.end());
    std::sort(split.test.begin(), split.test.end());
    std::sort(split.train.begin(), split.train.end());
  }
  return splits;
}

CvResult cross_validate_delta(const Matrix& x, const Vector& y, const SpdMatrix& sigma_e,
                              const SpdMatrix& phi_hat, const SnrCvConfig& cfg, Rng& rng,
                              const CovarianceEstimator& refit) {
  cfg.validate();
  require_finite(x, "cross_validate_delta");
  if (y.size() != x.rows()) throw DimensionMismatch("cross_validate_delta: y length");
  if (sigma_e.dim() != x.cols() || phi_hat.dim() != x.cols()) {
    throw DimensionMismatch("cross_validate_delta: Sigma_e or Phi_hat dimension");
  }
  if (cfg.refit_per_fold && !refit) {
    throw InvalidParams("cross_validate_delta: refit_per_fold needs a covariance estimator");
  }

  const auto splits = holdout_splits(x.rows(), cfg.holdout_fraction, cfg.repeats, rng);
  const double d = static_cast<double>(x.cols());

  // Every prediction only needs inner products of rows, so form the n x n
  // Gram matrices once and take sub-blocks per split.
  const Matrix phi_xt = phi_hat.multiply(x.transpose());
  const Matrix g_phi = x * phi_xt;
  Matrix k_full;
  if (!cfg.refit_per_fold) k_full = x * sigma_e.solve(x.transpose());

  std::vector<double> totals(cfg.grid.size(), 0.0);
  for (const auto& split : splits) {
    const Index v = static_cast<Index>(split.test.size());
    const Vector y_tr = y(split.train);
    const Vector y_te = y(split.test);

    Matrix k_tt;
    Matrix k_vt;
    if (cfg.refit_per_fold) {
      const Matrix x_tr = x(split.train, Eigen::indexing::all);
      const SpdMatrix fold_sigma = refit(x_tr);
      const Matrix s_inv_xt = fold_sigma.solve(x_tr.transpose());
      k_tt = x_tr * s_inv_xt;
      k_vt = x(split.test, Eigen::indexing::all) * s_inv_xt;
    } else {
      k_tt = k_full(split.train, split.train);
      k_vt = k_full(split.test, split.train);
    }
    k_tt = 0.5 * (k_tt + k_tt.transpose());
    const auto k_llt = factor_gram(k_tt, "cross_validate_delta");
    const Matrix noise_part = k_llt.solve(k_vt.transpose()).transpose();

    const Matrix g_tt = g_phi(split.train, split.train);
    const Matrix g_vt = g_phi(split.test, split.train);
    for (std::size_t gi = 0; gi < cfg.grid.size(); ++gi) {
      const double c = cfg.grid[gi] / d;
      Matrix mat = c * g_tt;
      mat = 0.5 * (mat + mat.transpose());
      mat.diagonal().array() += 1.0;
      Eigen::LLT<Matrix> llt(mat);
      const Vector coef = llt.solve(y_tr);
      const Vector pred = (c * g_vt + noise_part) * coef;
      totals[gi] += (pred - y_te).squaredNorm() / static_cast<double>(v);
    }
  }

  CvResult out;
  out.errors.resize(cfg.grid.size());
  std::size_t best = 0;
  for (std::size_t gi = 0; gi < cfg.grid.size(); ++gi) {
    out.errors[gi] = totals[gi] / static_cast<double>(splits.size());
    const bool better = out.errors[gi] < out.errors[best] ||
                        (out.errors[gi] == out.errors[best] && cfg.grid[gi] < cfg.grid[best]);
    if (better) best = gi;
  }
  out.delta = cfg.grid[best];
  return out;
}

LinearEstimator w_Oe(const Matrix& x, const SpdMatrix& sigma_e, double delta_e) {
  auto e = optimal_response_linear(x, sigma_e, SpdMatrix::identity(x.cols()), delta_e);
  e.label = "w_Oe";
  return e;
}

LinearEstimator w_Oe_phi(const Matrix& x, const SpdMatrix& sigma_e, double delta_e,
                         const SpdMatrix& phi_hat) {
  auto e = optimal_response_linear(x, sigma_e, phi_hat, delta_e);
  e.label = "w_Oe_phi";
  return e;
}

EmpiricalFit fit_empirical(const Matrix& x, const Vector& y, const EmpiricalConfig& cfg, Rng& rng,
                           const SpdMatrix* phi_hat, const SpdMatrix* oracle_sigma) {
  CovarianceEstimator estimate;
  switch (cfg.method) {
    case CovarianceMethod::GraphicalLasso:
      estimate = [&cfg](const Matrix& m) { return graphical_lasso(m, cfg.glasso); };
      break;
    case CovarianceMethod::LedoitWolf:
      estimate = [](const Matrix& m) { return ledoit_wolf(m); };
      break;
    case CovarianceMethod::Ridge:
      estimate = [&cfg](const Matrix& m) { return ridge_empirical(m, cfg.ridge_lambda); };
      break;
    case CovarianceMethod::Oracle:
      if (oracle_sigma == nullptr) {
        throw InvalidParams("fit_empirical: oracle covariance requested but not supplied");
      }
      estimate = [oracle_sigma](const Matrix&) { return *oracle_sigma; };
      break;
  }
  SpdMatrix sigma_e = estimate(x);
  const SpdMatrix phi = phi_hat != nullptr ? *phi_hat : SpdMatrix::identity(x.cols());
  const CvResult cv = cross_validate_delta(x, y, sigma_e, phi, cfg.cv, rng, estimate);
  LinearEstimator e = phi_hat != nullptr ? w_Oe_phi(x, sigma_e, cv.delta, *phi_hat)
                                         : w_Oe(x, sigma_e, cv.delta);
  return {std::move(e), std::move(sigma_e), cv.delta};
}

}  // namespace optinterp
