#pragma once

namespace optinterp {

/// Two-level spectrum: fraction psi1 of eigenvalues equal rho1, the rest rho2,
/// with d/n -> gamma.
struct StrongWeakParams {
  double rho1 = 1.0;
  double rho2 = 1.0;
  double psi1 = 0.5;
  double gamma = 2.0;

  void validate() const;
};

/// Companion Stieltjes transform at zero,
///   v(0) = (x + sqrt(x^2 + 4 (gamma - 1) rho1 rho2)) / (2 (gamma - 1) rho1 rho2),
///   x    = rho1 + rho2 - gamma psi1 rho1 - gamma (1 - psi1) rho2.
double companion_v0(const StrongWeakParams& p);

/// psi1 rho1^2 / (1 + rho1 v0)^2 + (1 - psi1) rho2^2 / (1 + rho2 v0)^2.
double delta_term(const StrongWeakParams& p, double v0);

/// 1/v - gamma (psi1 rho1 / (1 + rho1 v) + (1 - psi1) rho2 / (1 + rho2 v)),
/// zero at v = v(0).
double silverstein_residual(const StrongWeakParams& p, double v);

struct AsymptoticRisk {
  double bias = 0.0;
  double variance = 0.0;
  double total() const { return bias + variance; }
};

/// Limits of the minimum-norm interpolator's bias and variance (isotropic prior):
///   B = r2 / (gamma v0),  V = sigma2 (1 / (1 - gamma Delta v0^2) - 1).
AsymptoticRisk min_norm_asymptotics(const StrongWeakParams& p, double r2, double sigma2);

/// Limit of the best-variance interpolator's excess risk,
///   r2 (psi1 rho1 + (1 - psi1) rho2)(1 - 1/gamma) + sigma2 / (gamma - 1).
double best_variance_asymptotics(const StrongWeakParams& p, double r2, double sigma2);

/// The same limit split into its bias and variance parts.
AsymptoticRisk best_variance_asymptotic_parts(const StrongWeakParams& p, double r2, double sigma2);

}  // namespace optinterp
