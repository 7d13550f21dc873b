#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "optinterp/numerics.hpp"

namespace optinterp {

struct GDConfig {
  /// Step is step_safety * n / lambda_max(X P^{-1} X^T); stable for values in (0, 1).
  double step_safety = 0.5;
  /// Defaults to 200 * n when unset.
  std::optional<std::size_t> max_iters;
  /// Stop once ||X w - y|| <= residual_tol * ||y||.
  double residual_tol = 1e-10;
  bool record_history = false;
};

struct GDTrace {
  std::size_t iterations_used = 0;
  /// Relative training residual ||X w - y|| / ||y|| at the returned iterate.
  double final_residual = 0.0;
  bool converged = false;
  /// Relative residual before each step (and after the last), when recorded.
  std::vector<double> residual_history;
};

struct GDResult {
  Vector w;
  GDTrace trace;
};

/// Thrown by precond_gd when max_iters is exhausted; carries the last iterate.
class GdNotConverged : public NotConverged {
 public:
  GdNotConverged(GDResult partial, const std::string& what)
      : NotConverged(what), partial_(std::move(partial)) {}
  const GDResult& partial() const { return partial_; }

 private:
  GDResult partial_;
};

/// Gradient of R(w) = (1/n) ||X w - y||^2, i.e. (2/n) X^T (X w - y).
Vector grad_empirical_risk(const Vector& w, const Matrix& x, const Vector& y);

/// w_{t+1} = w_t - eta P^{-1} grad R(w_t) with constant eta, from w0.
GDResult precond_gd(const Matrix& x, const Vector& y, const SpdMatrix& preconditioner,
                    const Vector& w0, const GDConfig& cfg = {});

/// Limit of precond_gd: Sigma^{-1/2} (X Sigma^{-1/2})^+ (y - X w0) + w0.
Vector implicit_bias_closed_form(const Matrix& x, const SpdMatrix& sigma, const Vector& w0,
                                 const Vector& y);

/// (delta/d) Phi X^T (I_n + (delta/d) X Phi X^T)^{-1} y, the initialization
/// under which precond_gd converges to optimal_response_linear.
Vector w_O_init(const Matrix& x, const SpdMatrix& phi, double delta, const Vector& y);

}  // namespace optinterp
