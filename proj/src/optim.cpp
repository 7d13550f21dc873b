#include "optinterp/optim.hpp"

#include <cmath>
#include <string>

#include "optinterp/interpolators.hpp"

namespace optinterp {

namespace {

void check_system(const Matrix& x, const Vector& y, Index w_len, const char* what) {
  if (y.size() != x.rows() || w_len != x.cols()) {
    throw DimensionMismatch(std::string(what) + ": X is " + std::to_string(x.rows()) + "x" +
                            std::to_string(x.cols()) + ", y has " + std::to_string(y.size()) +
                            ", w has " + std::to_string(w_len));
  }
}

}  // namespace

Vector grad_empirical_risk(const Vector& w, const Matrix& x, const Vector& y) {
  check_system(x, y, w.size(), "grad_empirical_risk");
  return (2.0 / static_cast<double>(x.rows())) * (x.transpose() * (x * w - y));
}

GDResult precond_gd(const Matrix& x, const Vector& y, const SpdMatrix& preconditioner,
                    const Vector& w0, const GDConfig& cfg) {
  check_system(x, y, w0.size(), "precond_gd");
  if (preconditioner.dim() != x.cols()) throw DimensionMismatch("precond_gd: preconditioner");
  if (!(cfg.step_safety > 0.0 && cfg.step_safety < 1.0)) {
    throw InvalidParams("precond_gd: step_safety must lie in (0, 1)");
  }
  if (!(cfg.residual_tol > 0.0)) throw InvalidParams("precond_gd: residual_tol must be > 0");
  require_finite(x, "precond_gd");

  const double n = static_cast<double>(x.rows());
  const std::size_t max_iters = cfg.max_iters.value_or(200 * static_cast<std::size_t>(x.rows()));
  if (max_iters < 1) throw InvalidParams("precond_gd: max_iters must be >= 1");

  const Matrix pinv_xt = preconditioner.solve(x.transpose());
  Matrix k = x * pinv_xt;
  k = 0.5 * (k + k.transpose());
  const double lmax = max_eigenvalue(k);
  if (!(lmax > 0.0)) throw RankDeficient("precond_gd: X P^{-1} X^T vanishes");
  const double eta = cfg.step_safety * n / lmax;

  const double ynorm = y.norm();
  const double scale = ynorm > 0.0 ? ynorm : 1.0;

  GDResult out{w0, {}};
  Vector residual = x * out.w - y;
  double rel = residual.norm() / scale;
  std::size_t it = 0;
  for (; it < max_iters && rel > cfg.residual_tol; ++it) {
    if (cfg.record_history) out.trace.residual_history.push_back(rel);
    const Vector grad = (2.0 / n) * (x.transpose() * residual);
    out.w -= eta * preconditioner.solve(grad);
    residual = x * out.w - y;
    rel = residual.norm() / scale;
    if (!std::isfinite(rel)) break;
  }
  if (cfg.record_history) out.trace.residual_history.push_back(rel);
  out.trace.iterations_used = it;
  out.trace.final_residual = rel;
  out.trace.converged = rel <= cfg.residual_tol;
  if (!out.trace.converged) {
    const std::string msg = "precond_gd: residual " + std::to_string(rel) + " after " +
                            std::to_string(it) + " iterations";
    throw GdNotConverged(std::move(out), msg);
  }
  return out;
}

Vector implicit_bias_closed_form(const Matrix& x, const SpdMatrix& sigma, const Vector& w0,
                                 const Vector& y) {
  check_system(x, y, w0.size(), "implicit_bias_closed_form");
  return variance_optimal_operator(x, sigma) * (y - x * w0) + w0;
}

Vector w_O_init(const Matrix& x, const SpdMatrix& phi, double delta, const Vector& y) {
  check_system(x, y, phi.dim(), "w_O_init");
  if (!(delta >= 0.0) || std::isinf(delta)) {
    throw InvalidParams("w_O_init: delta must be finite and >= 0");
  }
  const double c = delta / static_cast<double>(x.cols());
  if (c == 0.0) return Vector::Zero(x.cols());
  const Matrix phi_xt = phi.multiply(x.transpose());
  Matrix m = c * (x * phi_xt);
  m = 0.5 * (m + m.transpose());
  m.diagonal().array() += 1.0;
  Eigen::LLT<Matrix> llt(m);
  return c * (phi_xt * llt.solve(y));
}

}  // namespace optinterp
