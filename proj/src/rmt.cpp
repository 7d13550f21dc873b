#include "optinterp/rmt.hpp"

#include <cmath>
#include <string>

#include "optinterp/error.hpp"

namespace optinterp {

void StrongWeakParams::validate() const {
  if (!(rho1 > 0.0) || !(rho2 > 0.0) || !std::isfinite(rho1) || !std::isfinite(rho2)) {
    throw InvalidParams("strong-weak: rho1 and rho2 must be positive and finite");
  }
  if (!(psi1 >= 0.0 && psi1 <= 1.0)) throw InvalidParams("strong-weak: psi1 must lie in [0, 1]");
  if (!(gamma > 1.0) || !std::isfinite(gamma)) {
    throw InvalidParams("strong-weak: gamma must be > 1, got " + std::to_string(gamma));
  }
}

double companion_v0(const StrongWeakParams& p) {
  p.validate();
  const double x = p.rho1 + p.rho2 - p.gamma * p.psi1 * p.rho1 - p.gamma * (1.0 - p.psi1) * p.rho2;
  const double c = (p.gamma - 1.0) * p.rho1 * p.rho2;
  const double s = std::sqrt(x * x + 4.0 * c);
  // Same root, rearranged to avoid cancellation when x < 0.
  return x >= 0.0 ? (x + s) / (2.0 * c) : 2.0 / (s - x);
}

double delta_term(const StrongWeakParams& p, double v0) {
  const double a = 1.0 + p.rho1 * v0;
  const double b = 1.0 + p.rho2 * v0;
  return p.psi1 * p.rho1 * p.rho1 / (a * a) + (1.0 - p.psi1) * p.rho2 * p.rho2 / (b * b);
}

double silverstein_residual(const StrongWeakParams& p, double v) {
  return 1.0 / v - p.gamma * (p.psi1 * p.rho1 / (1.0 + p.rho1 * v) +
                              (1.0 - p.psi1) * p.rho2 / (1.0 + p.rho2 * v));
}

AsymptoticRisk min_norm_asymptotics(const StrongWeakParams& p, double r2, double sigma2) {
  const double v0 = companion_v0(p);
  const double delta = delta_term(p, v0);
  const double denom = 1.0 - p.gamma * delta * v0 * v0;
  if (!(denom > 0.0)) {
    throw InvalidParams("min_norm_asymptotics: 1 - gamma Delta v0^2 = " + std::to_string(denom) +
                        " is not positive");
  }
  return {r2 / (p.gamma * v0), sigma2 * (1.0 / denom - 1.0)};
}

AsymptoticRisk best_variance_asymptotic_parts(const StrongWeakParams& p, double r2, double sigma2) {
  p.validate();
  const double mean = p.psi1 * p.rho1 + (1.0 - p.psi1) * p.rho2;
  return {r2 * mean * (1.0 - 1.0 / p.gamma), sigma2 / (p.gamma - 1.0)};
}

double best_variance_asymptotics(const StrongWeakParams& p, double r2, double sigma2) {
  return best_variance_asymptotic_parts(p, r2, sigma2).total();
}

}  // namespace optinterp
