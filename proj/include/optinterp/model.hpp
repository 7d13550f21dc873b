#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <variant>

#include "optinterp/numerics.hpp"

namespace optinterp {

using Rng = std::mt19937_64;

/// Independent generator for stream `stream` of a run seeded by `seed`.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

namespace cov {
struct Identity {};
/// diag(rho1 x floor(d * psi1), rho2 x rest).
struct StrongWeak {
  double rho1 = 1.0;
  double rho2 = 1.0;
  double psi1 = 0.5;
};
/// Sigma_ij = rho^|i-j|.
struct Autoregressive {
  double rho = 0.5;
};
/// diag(-log(1 - i/(d+1))), i = 1..d.
struct Exponential {};
struct Custom {
  Matrix matrix;
};
}  // namespace cov

using CovarianceSpec =
    std::variant<cov::Identity, cov::StrongWeak, cov::Autoregressive, cov::Exponential, cov::Custom>;

namespace prior {
struct Identity {};
struct Autoregressive {
  double rho = 0.5;
};
/// The "hard" prior Phi = Sigma^{-1}.
struct InverseOfCovariance {};
struct Custom {
  Matrix matrix;
};
}  // namespace prior

using PriorSpec =
    std::variant<prior::Identity, prior::Autoregressive, prior::InverseOfCovariance, prior::Custom>;

struct ProblemConfig {
  Index n = 0;
  Index d = 0;
  double r2 = 1.0;
  double sigma2 = 1.0;
  std::uint64_t seed = 0;

  /// Signal-to-noise ratio r2 / sigma2. +inf when sigma2 = 0 < r2, and 0
  /// whenever r2 = 0 (no signal, including the degenerate 0/0 case).
  double snr() const {
    if (r2 == 0.0) return 0.0;
    if (sigma2 == 0.0) return std::numeric_limits<double>::infinity();
    return r2 / sigma2;
  }

  void validate() const;
};

struct ProblemInstance {
  Matrix x;
  Vector w_star;
  Vector xi;
  Vector y;
  SpdMatrix sigma;
  SpdMatrix phi;
  ProblemConfig config;
};

SpdMatrix build_covariance(const CovarianceSpec& spec, Index d);
SpdMatrix build_prior(const PriorSpec& spec, const SpdMatrix& sigma, Index d);

/// Gaussian data model with the square roots of Sigma and Phi computed once,
/// so many replicates can be drawn without refactoring. Immutable.
class GaussianDesign {
 public:
  GaussianDesign(SpdMatrix sigma, SpdMatrix phi);

  const SpdMatrix& sigma() const { return sigma_; }
  const SpdMatrix& phi() const { return phi_; }

  /// Rows of X ~ N(0, Sigma), w* ~ N(0, (r2/d) Phi), xi ~ N(0, sigma2 I).
  /// Throws RankDeficient if X does not have full row rank.
  ProblemInstance sample(const ProblemConfig& config, Rng& rng) const;

 private:
  SpdMatrix sigma_;
  SpdMatrix phi_;
  Matrix sigma_sqrt_;
  Matrix phi_sqrt_;
};

ProblemInstance sample_instance(const ProblemConfig& config, const SpdMatrix& sigma,
                                const SpdMatrix& phi, Rng& rng);

/// `count` rows drawn uniformly from the sphere of radius sqrt(d).
Matrix sample_sphere(Index count, Index d, Rng& rng);

/// Matrix of i.i.d. standard normals, filled column by column.
Matrix standard_normal(Index rows, Index cols, Rng& rng);

}  // namespace optinterp
