#include "optinterp/model.hpp"

#include <cmath>
#include <string>

namespace optinterp {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Matrix toeplitz_power(double rho, Index d) {
  Matrix m(d, d);
  for (Index j = 0; j < d; ++j) {
    for (Index i = 0; i < d; ++i) {
      m(i, j) = std::pow(rho, static_cast<double>(i > j ? i - j : j - i));
    }
  }
  return m;
}

void check_rho(double rho, const char* what) {
  if (!(rho > 0.0 && rho < 1.0)) {
    throw InvalidSpec(std::string(what) + ": rho must lie in (0, 1), got " + std::to_string(rho));
  }
}

Matrix square_root(const SpdMatrix& s) {
  if (s.is_diagonal()) return s.diagonal_entries().cwiseSqrt().asDiagonal();
  return sqrt_spd(s).matrix();
}

}  // namespace

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x6f707469u};
  return Rng(seq);
}

void ProblemConfig::validate() const {
  if (n < 1) throw InvalidSpec("ProblemConfig: n must be >= 1");
  if (d < n) throw InvalidSpec("ProblemConfig: requires d >= n");
  if (!(r2 >= 0.0) || !std::isfinite(r2)) throw InvalidSpec("ProblemConfig: r2 must be >= 0");
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) {
    throw InvalidSpec("ProblemConfig: sigma2 must be >= 0");
  }
}

SpdMatrix build_covariance(const CovarianceSpec& spec, Index d) {
  if (d < 1) throw InvalidSpec("build_covariance: d must be >= 1");
  return std::visit(
      overloaded{
          [&](const cov::Identity&) { return SpdMatrix::identity(d); },
          [&](const cov::StrongWeak& s) {
            if (!(s.psi1 >= 0.0 && s.psi1 <= 1.0)) {
              throw InvalidSpec("strong_weak: psi1 must lie in [0, 1]");
            }
            if (!(s.rho1 > 0.0) || !(s.rho2 > 0.0) || !std::isfinite(s.rho1) ||
                !std::isfinite(s.rho2)) {
              throw InvalidSpec("strong_weak: rho1 and rho2 must be positive");
            }
            // 1e-9 guards d * psi1 landing just below an integer in floating point.
            const auto strong = static_cast<Index>(std::floor(static_cast<double>(d) * s.psi1 + 1e-9));
            Vector diag(d);
            diag.head(strong).setConstant(s.rho1);
            diag.tail(d - strong).setConstant(s.rho2);
            return SpdMatrix::diagonal(diag);
          },
          [&](const cov::Autoregressive& s) {
            check_rho(s.rho, "autoregressive covariance");
            return SpdMatrix(toeplitz_power(s.rho, d));
          },
          [&](const cov::Exponential&) {
            Vector diag(d);
            for (Index i = 0; i < d; ++i) {
              diag(i) = -std::log1p(-static_cast<double>(i + 1) / static_cast<double>(d + 1));
            }
            return SpdMatrix::diagonal(diag);
          },
          [&](const cov::Custom& s) {
            if (s.matrix.rows() != d) {
              throw InvalidSpec("custom covariance: matrix dimension " +
                                std::to_string(s.matrix.rows()) + " != d = " + std::to_string(d));
            }
            return SpdMatrix(s.matrix);
          },
      },
      spec);
}

SpdMatrix build_prior(const PriorSpec& spec, const SpdMatrix& sigma, Index d) {
  if (d < 1) throw InvalidSpec("build_prior: d must be >= 1");
  return std::visit(
      overloaded{
          [&](const prior::Identity&) { return SpdMatrix::identity(d); },
          [&](const prior::Autoregressive& s) {
            check_rho(s.rho, "autoregressive prior");
            return SpdMatrix(toeplitz_power(s.rho, d));
          },
          [&](const prior::InverseOfCovariance&) {
            if (sigma.dim() != d) throw DimensionMismatch("inverse_of_covariance: Sigma dimension");
            return SpdMatrix(sigma.inverse());
          },
          [&](const prior::Custom& s) {
            if (s.matrix.rows() != d) throw InvalidSpec("custom prior: matrix dimension mismatch");
            return SpdMatrix(s.matrix);
          },
      },
      spec);
}

Matrix standard_normal(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) g(i, j) = normal(rng);
  }
  return g;
}

GaussianDesign::GaussianDesign(SpdMatrix sigma, SpdMatrix phi)
    : sigma_(std::move(sigma)), phi_(std::move(phi)) {
  if (sigma_.dim() != phi_.dim()) {
    throw DimensionMismatch("GaussianDesign: Sigma and Phi dimensions differ");
  }
  sigma_sqrt_ = square_root(sigma_);
  phi_sqrt_ = square_root(phi_);
}

ProblemInstance GaussianDesign::sample(const ProblemConfig& config, Rng& rng) const {
  config.validate();
  if (config.d != sigma_.dim()) {
    throw DimensionMismatch("sample_instance: config.d = " + std::to_string(config.d) +
                            " but Sigma is " + std::to_string(sigma_.dim()) + "-dimensional");
  }
  const Index n = config.n;
  const Index d = config.d;

  Matrix g = standard_normal(n, d, rng);
  Matrix x = sigma_.is_diagonal() ? Matrix(g * sigma_sqrt_.diagonal().asDiagonal())
                                  : Matrix(g * sigma_sqrt_);
  Vector gw = standard_normal(d, 1, rng);
  const double wscale = std::sqrt(config.r2 / static_cast<double>(d));
  Vector w_star = phi_.is_diagonal() ? Vector(wscale * phi_sqrt_.diagonal().cwiseProduct(gw))
                                     : Vector(wscale * (phi_sqrt_ * gw));
  Vector xi = std::sqrt(config.sigma2) * standard_normal(n, 1, rng);
  Vector y = x * w_star + xi;

  factor_gram(gram(x), "sample_instance");

  return ProblemInstance{std::move(x), std::move(w_star), std::move(xi), std::move(y),
                         sigma_,       phi_,              config};
}

ProblemInstance sample_instance(const ProblemConfig& config, const SpdMatrix& sigma,
                                const SpdMatrix& phi, Rng& rng) {
  return GaussianDesign(sigma, phi).sample(config, rng);
}

Matrix sample_sphere(Index count, Index d, Rng& rng) {
  if (d < 1) throw InvalidSpec("sample_sphere: d must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double radius = std::sqrt(static_cast<double>(d));
  Matrix out(count, d);
  Vector row(d);
  for (Index i = 0; i < count; ++i) {
    double norm = 0.0;
    do {
      for (Index j = 0; j < d; ++j) row(j) = normal(rng);
      norm = row.norm();
    } while (norm == 0.0);
    out.row(i) = (row.transpose() / norm) * radius;
  }
  return out;
}

}  // namespace optinterp
