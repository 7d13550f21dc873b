#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "optinterp/interpolators.hpp"
#include "optinterp/model.hpp"
#include "optinterp/optim.hpp"
#include "optinterp/risk.hpp"

namespace optinterp {

enum class Activation { Relu, Tanh, Identity };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

/// f_a(x) = a^T act(Theta x / sqrt(d)) with a fixed first layer Theta (N x d).
struct RFModel {
  Matrix theta;
  Activation activation = Activation::Relu;

  Index width() const { return theta.rows(); }
  Index input_dim() const { return theta.cols(); }
  /// Throws InvalidParams unless every row of Theta has norm sqrt(d) to 1e-10.
  void validate() const;
};

/// Theta rows drawn uniformly from the sphere of radius sqrt(d).
RFModel make_rf_model(Index width, Index d, Activation activation, Rng& rng);

/// act(X Theta^T / sqrt(d)), one row per sample.
Matrix rf_features(const Matrix& x, const RFModel& model);

struct RFSecondMoments {
  SpdMatrix sigma_z;
  /// E[z x^T], N x d.
  Matrix sigma_zx;
  std::size_t sample_count = 0;
  /// Set when Sigma_z was numerically singular and a ridge was added.
  bool regularized = false;
};

/// Monte Carlo estimate of E[z z^T] and E[z x^T] for x uniform on the sphere
/// of radius sqrt(d). Samples are processed in fixed batches, each with its
/// own generator, and combined in batch order, so the result is identical
/// for any thread count.
RFSecondMoments estimate_second_moments(const RFModel& model, std::size_t samples, Rng& rng,
                                        unsigned threads = 1);

/// Risk-optimal response-linear interpolator in feature space (N x n map):
///   Q = Sigma_z^{-1} (A + Z^T (Z Sigma_z^{-1} Z^T)^{-1} (M - Z Sigma_z^{-1} A)) M^{-1},
///   A = Sigma_zx Phi X^T,  M = (d/delta) I + X Phi X^T.
LinearEstimator rf_optimal(const Matrix& x, const Matrix& z, const RFSecondMoments& moments,
                           const SpdMatrix& phi, double delta);

/// Q = Z^+ = Z^T (Z Z^T)^{-1}; needs n <= N.
LinearEstimator rf_min_norm(const Matrix& z);

/// a0 = Sigma_z^{-1} Sigma_zx Phi X^T ((d/delta) I + X Phi X^T)^{-1} y.
Vector rf_init(const RFSecondMoments& moments, const SpdMatrix& phi, const Matrix& x,
               double delta, const Vector& y);

/// Preconditioned gradient descent on the last layer with preconditioner Sigma_z.
GDResult rf_pgd(const Matrix& z, const Vector& y, const SpdMatrix& sigma_z, const Vector& a0,
                const GDConfig& cfg = {});

/// a^T Sigma_z a - 2 a^T Sigma_zx w* + w*^T Sigma w*.
double rf_risk(const Vector& a, const Vector& w_star, const RFSecondMoments& moments,
               const SpdMatrix& sigma);

/// E_xi of rf_risk for a = Q (X w* + xi).
double rf_conditional_expected_risk(const Matrix& q, const Matrix& x, const Vector& w_star,
                                    const RFSecondMoments& moments, const SpdMatrix& sigma,
                                    double sigma2);

/// B = (r2/d)[tr(Sz Q XPX^T Q^T) - 2 tr(Szx P X^T Q^T) + tr(Sigma P)], V = sigma2 tr(Sz Q Q^T).
BiasVariance rf_bias_variance(const Matrix& q, const Matrix& x, const RFSecondMoments& moments,
                              const SpdMatrix& sigma, const SpdMatrix& phi, double r2,
                              double sigma2);

/// Instance with rows of X uniform on the sphere of radius sqrt(d), so Sigma = I.
ProblemInstance sample_sphere_instance(const ProblemConfig& config, const SpdMatrix& phi, Rng& rng);

}  // namespace optinterp
