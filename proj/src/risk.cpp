#include "optinterp/risk.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "optinterp/parallel.hpp"

namespace optinterp {

namespace {

void check_linear(const Matrix& q, const Matrix& x, const SpdMatrix& sigma, const char* what) {
  if (q.rows() != x.cols() || q.cols() != x.rows() || sigma.dim() != x.cols()) {
    throw DimensionMismatch(std::string(what) + ": Q is " + std::to_string(q.rows()) + "x" +
                            std::to_string(q.cols()) + ", X is " + std::to_string(x.rows()) + "x" +
                            std::to_string(x.cols()) + ", Sigma is " +
                            std::to_string(sigma.dim()));
  }
}

double sigma_norm2(const Vector& v, const SpdMatrix& sigma) {
  return std::max(0.0, v.dot(sigma.multiply(v).col(0)));
}

}  // namespace

double excess_risk(const Vector& w, const Vector& w_star, const SpdMatrix& sigma) {
  if (w.size() != w_star.size() || w.size() != sigma.dim()) {
    throw DimensionMismatch("excess_risk: length mismatch");
  }
  return sigma_norm2(w - w_star, sigma);
}

double conditional_expected_excess_risk(const Matrix& q, const Matrix& x, const Vector& w_star,
                                        const SpdMatrix& sigma, double sigma2) {
  check_linear(q, x, sigma, "conditional_expected_excess_risk");
  if (w_star.size() != x.cols()) throw DimensionMismatch("conditional_expected_excess_risk: w*");
  const Vector u = q * (x * w_star) - w_star;
  double risk = sigma_norm2(u, sigma);
  if (sigma2 != 0.0) risk += sigma2 * sigma.multiply(q).cwiseProduct(q).sum();
  return risk;
}

BiasVariance bias_variance(const Matrix& q, const Matrix& x, const SpdMatrix& sigma,
                           const SpdMatrix& phi, double r2, double sigma2) {
  check_linear(q, x, sigma, "bias_variance");
  if (phi.dim() != x.cols()) throw DimensionMismatch("bias_variance: Phi dimension");
  const double d = static_cast<double>(x.cols());

  // tr(S (QX - I) P (QX - I)^T) expanded so that no d x d product is formed:
  //   tr(SQ (XPX^T) Q^T) - 2 tr(SQ XP) + tr(SP).
  const Matrix sq = sigma.multiply(q);
  const Matrix xp = phi.multiply(x.transpose()).transpose();
  const Matrix xpx = x * xp.transpose();
  const double quad = (sq * xpx).cwiseProduct(q).sum();
  const double cross = sq.cwiseProduct(xp.transpose()).sum();
  double sp = 0.0;
  if (sigma.is_diagonal() && phi.is_diagonal()) {
    sp = sigma.diagonal_entries().dot(phi.diagonal_entries());
  } else {
    sp = sigma.matrix().cwiseProduct(phi.matrix()).sum();
  }
  BiasVariance out;
  out.bias = std::max(0.0, r2 / d * (quad - 2.0 * cross + sp));
  out.variance = sigma2 * sq.cwiseProduct(q).sum();
  return out;
}

double expected_excess_risk_best_possible(const Matrix& x, const SpdMatrix& sigma, double sigma2) {
  if (x.cols() != sigma.dim()) throw DimensionMismatch("expected_excess_risk_best_possible");
  require_finite(x, "expected_excess_risk_best_possible");
  if (sigma2 == 0.0) return 0.0;
  Matrix k = x * sigma.solve(x.transpose());
  k = 0.5 * (k + k.transpose());
  const auto llt = factor_gram(k, "expected_excess_risk_best_possible");
  return sigma2 * llt.solve(Matrix::Identity(k.rows(), k.cols())).trace();
}

bool is_interpolator(const Vector& w, const Matrix& x, const Vector& y, double tol) {
  if (w.size() != x.cols() || y.size() != x.rows()) return false;
  return (x * w - y).norm() <= tol * std::max(y.norm(), 1.0);
}

FittedEstimator FittedEstimator::linear(LinearEstimator e, const Vector& y) {
  FittedEstimator f;
  f.w = apply(e, y);
  f.q = std::move(e.q);
  f.label = std::move(e.label);
  return f;
}

FittedEstimator FittedEstimator::oracle(OracleEstimate e) {
  FittedEstimator f;
  f.w = std::move(e.w);
  f.label = std::move(e.label);
  return f;
}

ReplicateRisk evaluate(const FittedEstimator& fitted, const ProblemInstance& inst,
                       bool with_bias_variance) {
  ReplicateRisk out;
  if (!fitted.q) {
    out.excess_risk = excess_risk(fitted.w, inst.w_star, inst.sigma);
    return out;
  }
  const Matrix& q = *fitted.q;
  out.excess_risk =
      conditional_expected_excess_risk(q, inst.x, inst.w_star, inst.sigma, inst.config.sigma2);
  if (with_bias_variance) {
    const auto bv = bias_variance(q, inst.x, inst.sigma, inst.phi, inst.config.r2,
                                  inst.config.sigma2);
    out.bias = bv.bias;
    out.variance = bv.variance;
  }
  return out;
}

MeanStderr mean_stderr(const std::vector<double>& values) {
  MeanStderr out;
  if (values.empty()) return out;
  const double count = static_cast<double>(values.size());
  out.mean = pairwise_sum(values.data(), values.size()) / count;
  if (values.size() < 2) return out;
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double c = values[i] - out.mean;
    sq[i] = c * c;
  }
  const double var = pairwise_sum(sq.data(), sq.size()) / (count - 1.0);
  out.stderr_ = std::sqrt(var / count);
  return out;
}

RiskReport monte_carlo_expected_risk(const EstimatorFactory& factory, const ProblemConfig& config,
                                     const CovarianceSpec& sigma_spec, const PriorSpec& phi_spec,
                                     std::size_t replicates, std::uint64_t seed,
                                     const MonteCarloOptions& opts) {
  if (replicates < 2) throw InvalidParams("monte_carlo_expected_risk: replicates must be >= 2");
  config.validate();
  SpdMatrix sigma = build_covariance(sigma_spec, config.d);
  SpdMatrix phi = build_prior(phi_spec, sigma, config.d);
  const GaussianDesign design(std::move(sigma), std::move(phi));

  std::vector<std::optional<ReplicateRisk>> slots(replicates);
  parallel_for(replicates, opts.threads, [&](std::size_t i) {
    try {
      Rng rng = make_rng(seed, i);
      const ProblemInstance inst = design.sample(config, rng);
      const FittedEstimator fitted = factory(inst, rng);
      slots[i] = evaluate(fitted, inst, opts.with_bias_variance);
    } catch (const Error&) {
      slots[i].reset();
    }
  });

  std::vector<double> risks;
  std::vector<double> biases;
  std::vector<double> variances;
  RiskReport report;
  for (const auto& s : slots) {
    if (!s) {
      ++report.failures;
      continue;
    }
    risks.push_back(s->excess_risk);
    if (s->bias) biases.push_back(*s->bias);
    if (s->variance) variances.push_back(*s->variance);
  }
  report.replicates = risks.size();
  const auto ms = mean_stderr(risks);
  report.excess_risk = ms.mean;
  report.stderr_ = ms.stderr_;
  if (!biases.empty() && biases.size() == risks.size()) {
    report.bias = mean_stderr(biases).mean;
    report.variance = mean_stderr(variances).mean;
  }
  return report;
}

}  // namespace optinterp
