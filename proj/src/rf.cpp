#include "optinterp/rf.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "optinterp/parallel.hpp"

namespace optinterp {

namespace {

constexpr std::size_t kMomentBatch = 2048;

void check_delta(double delta, const char* what) {
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw InvalidParams(std::string(what) + ": delta must lie in (0, inf)");
  }
}

// (d/delta) I + X Phi X^T.
Matrix ridge_matrix(const Matrix& x, const Matrix& phi_xt, double delta) {
  Matrix m = x * phi_xt;
  m = 0.5 * (m + m.transpose());
  m.diagonal().array() += static_cast<double>(x.cols()) / delta;
  return m;
}

Eigen::LLT<Matrix> factor_ridge(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("(d/delta) I + X Phi X^T is not positive definite");
  }
  return llt;
}

void check_moments(const Matrix& x, const RFSecondMoments& m, const char* what) {
  if (m.sigma_zx.cols() != x.cols() || m.sigma_zx.rows() != m.sigma_z.dim()) {
    throw DimensionMismatch(std::string(what) + ": moments do not match X");
  }
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Relu:
      return "relu";
    case Activation::Tanh:
      return "tanh";
    case Activation::Identity:
      return "identity";
  }
  return "relu";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw InvalidSpec("unknown activation '" + std::string(name) + "'");
}

void RFModel::validate() const {
  if (theta.rows() < 1 || theta.cols() < 1) throw InvalidParams("RFModel: empty Theta");
  require_finite(theta, "RFModel");
  const double radius = std::sqrt(static_cast<double>(theta.cols()));
  for (Index i = 0; i < theta.rows(); ++i) {
    if (std::abs(theta.row(i).norm() - radius) > 1e-10 * radius) {
      throw InvalidParams("RFModel: row " + std::to_string(i) + " is not on the sphere");
    }
  }
}

RFModel make_rf_model(Index width, Index d, Activation activation, Rng& rng) {
  if (width < 1) throw InvalidParams("make_rf_model: width must be >= 1");
  return {sample_sphere(width, d, rng), activation};
}

Matrix rf_features(const Matrix& x, const RFModel& model) {
  if (x.cols() != model.input_dim()) {
    throw DimensionMismatch("rf_features: X has " + std::to_string(x.cols()) +
                            " columns, Theta has " + std::to_string(model.input_dim()));
  }
  Matrix z = (x * model.theta.transpose()) / std::sqrt(static_cast<double>(model.input_dim()));
  switch (model.activation) {
    case Activation::Relu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::Tanh:
      z = z.array().tanh().matrix();
      break;
    case Activation::Identity:
      break;
  }
  return z;
}

RFSecondMoments estimate_second_moments(const RFModel& model, std::size_t samples, Rng& rng,
                                        unsigned threads) {
  const Index width = model.width();
  const Index d = model.input_dim();
  if (samples < static_cast<std::size_t>(width)) {
    throw InvalidParams("estimate_second_moments: need at least N = " + std::to_string(width) +
                        " samples");
  }
  const std::uint64_t base = rng();
  const std::size_t batches = (samples + kMomentBatch - 1) / kMomentBatch;
  std::vector<Matrix> zz(batches);
  std::vector<Matrix> zx(batches);
  parallel_for(batches, threads, [&](std::size_t b) {
    const std::size_t count = std::min(kMomentBatch, samples - b * kMomentBatch);
    Rng local = make_rng(base, b);
    const Matrix xs = sample_sphere(static_cast<Index>(count), d, local);
    const Matrix z = rf_features(xs, model);
    zz[b] = gram(z.transpose());
    zx[b] = z.transpose() * xs;
  });

  Matrix sz = Matrix::Zero(width, width);
  Matrix szx = Matrix::Zero(width, d);
  for (std::size_t b = 0; b < batches; ++b) {
    sz += zz[b];
    szx += zx[b];
  }
  const double inv = 1.0 / static_cast<double>(samples);
  sz *= inv;
  szx *= inv;
  sz = 0.5 * (sz + sz.transpose());

  bool regularized = false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sz, Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().maxCoeff();
  if (lmin < static_cast<double>(width) * std::numeric_limits<double>::epsilon() * lmax) {
    sz.diagonal().array() += 1e-8 * sz.trace() / static_cast<double>(width);
    regularized = true;
  }
  return {SpdMatrix(std::move(sz)), std::move(szx), samples, regularized};
}

LinearEstimator rf_optimal(const Matrix& x, const Matrix& z, const RFSecondMoments& moments,
                           const SpdMatrix& phi, double delta) {
  check_delta(delta, "rf_optimal");
  check_moments(x, moments, "rf_optimal");
  if (z.rows() != x.rows() || z.cols() != moments.sigma_z.dim()) {
    throw DimensionMismatch("rf_optimal: Z must be n x N");
  }
  if (phi.dim() != x.cols()) throw DimensionMismatch("rf_optimal: Phi dimension");
  require_finite(z, "rf_optimal");

  const Matrix phi_xt = phi.multiply(x.transpose());
  const Matrix m = ridge_matrix(x, phi_xt, delta);
  const auto m_llt = factor_ridge(m);

  const Matrix c = moments.sigma_z.solve(moments.sigma_zx * phi_xt);  // Sigma_z^{-1} A
  const Matrix b = moments.sigma_z.solve(z.transpose());              // Sigma_z^{-1} Z^T
  Matrix kz = z * b;
  kz = 0.5 * (kz + kz.transpose());
  const auto k_llt = factor_gram(kz, "rf_optimal");
  const Matrix inner = c + b * k_llt.solve(m - z * c);
  return {m_llt.solve(inner.transpose()).transpose(), "rf_optimal"};
}

LinearEstimator rf_min_norm(const Matrix& z) {
  require_finite(z, "rf_min_norm");
  if (z.rows() > z.cols()) {
    throw RankDeficient("rf_min_norm: n = " + std::to_string(z.rows()) + " exceeds width N = " +
                        std::to_string(z.cols()) + ", no interpolator exists");
  }
  const auto llt = factor_gram(gram(z), "rf_min_norm");
  return {llt.solve(z).transpose(), "rf_min_norm"};
}

Vector rf_init(const RFSecondMoments& moments, const SpdMatrix& phi, const Matrix& x,
               double delta, const Vector& y) {
  check_delta(delta, "rf_init");
  check_moments(x, moments, "rf_init");
  if (y.size() != x.rows()) throw DimensionMismatch("rf_init: y length");
  if (phi.dim() != x.cols()) throw DimensionMismatch("rf_init: Phi dimension");
  const Matrix phi_xt = phi.multiply(x.transpose());
  const auto llt = factor_ridge(ridge_matrix(x, phi_xt, delta));
  const Vector t = phi_xt * llt.solve(y);
  return moments.sigma_z.solve(moments.sigma_zx * t);
}

GDResult rf_pgd(const Matrix& z, const Vector& y, const SpdMatrix& sigma_z, const Vector& a0,
                const GDConfig& cfg) {
  return precond_gd(z, y, sigma_z, a0, cfg);
}

double rf_risk(const Vector& a, const Vector& w_star, const RFSecondMoments& moments,
               const SpdMatrix& sigma) {
  if (a.size() != moments.sigma_z.dim() || w_star.size() != moments.sigma_zx.cols() ||
      sigma.dim() != w_star.size()) {
    throw DimensionMismatch("rf_risk: length mismatch");
  }
  const double aa = a.dot(moments.sigma_z.multiply(a).col(0));
  const double aw = a.dot(moments.sigma_zx * w_star);
  const double ww = w_star.dot(sigma.multiply(w_star).col(0));
  return aa - 2.0 * aw + ww;
}

double rf_conditional_expected_risk(const Matrix& q, const Matrix& x, const Vector& w_star,
                                    const RFSecondMoments& moments, const SpdMatrix& sigma,
                                    double sigma2) {
  if (q.rows() != moments.sigma_z.dim() || q.cols() != x.rows()) {
    throw DimensionMismatch("rf_conditional_expected_risk: Q shape");
  }
  const Vector mean_a = q * (x * w_star);
  double risk = rf_risk(mean_a, w_star, moments, sigma);
  if (sigma2 != 0.0) risk += sigma2 * moments.sigma_z.multiply(q).cwiseProduct(q).sum();
  return risk;
}

BiasVariance rf_bias_variance(const Matrix& q, const Matrix& x, const RFSecondMoments& moments,
                              const SpdMatrix& sigma, const SpdMatrix& phi, double r2,
                              double sigma2) {
  check_moments(x, moments, "rf_bias_variance");
  if (q.rows() != moments.sigma_z.dim() || q.cols() != x.rows()) {
    throw DimensionMismatch("rf_bias_variance: Q shape");
  }
  const double d = static_cast<double>(x.cols());
  const Matrix sq = moments.sigma_z.multiply(q);
  const Matrix phi_xt = phi.multiply(x.transpose());
  const Matrix xpx = x * phi_xt;
  const double quad = (sq * xpx).cwiseProduct(q).sum();
  const double cross = (moments.sigma_zx * phi_xt).cwiseProduct(q).sum();
  const double sp = sigma.matrix().cwiseProduct(phi.matrix()).sum();
  return {r2 / d * (quad - 2.0 * cross + sp), sigma2 * sq.cwiseProduct(q).sum()};
}

ProblemInstance sample_sphere_instance(const ProblemConfig& config, const SpdMatrix& phi,
                                       Rng& rng) {
  if (config.n < 1 || config.d < 1) throw InvalidSpec("sample_sphere_instance: n, d must be >= 1");
  if (!(config.r2 >= 0.0) || !(config.sigma2 >= 0.0)) {
    throw InvalidSpec("sample_sphere_instance: r2 and sigma2 must be >= 0");
  }
  if (phi.dim() != config.d) throw DimensionMismatch("sample_sphere_instance: Phi dimension");
  Matrix x = sample_sphere(config.n, config.d, rng);
  const Vector g = standard_normal(config.d, 1, rng);
  const double scale = std::sqrt(config.r2 / static_cast<double>(config.d));
  Vector w_star = phi.is_diagonal() ? Vector(scale * phi.diagonal_entries().cwiseSqrt().cwiseProduct(g))
                                    : Vector(scale * (sqrt_spd(phi).matrix() * g));
  Vector xi = std::sqrt(config.sigma2) * standard_normal(config.n, 1, rng);
  Vector y = x * w_star + xi;
  return ProblemInstance{std::move(x), std::move(w_star), std::move(xi), std::move(y),
                         SpdMatrix::identity(config.d), phi, config};
}

}  // namespace optinterp
