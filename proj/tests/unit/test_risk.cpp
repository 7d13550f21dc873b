#include <doctest.h>

#include "../oracles.hpp"
#include "optinterp/error.hpp"
#include "optinterp/interpolators.hpp"
#include "optinterp/risk.hpp"

using namespace optinterp;

TEST_SUITE("risk") {

TEST_CASE("excess risk by hand and by sampling") {
  const Vector ws = (Vector(2) << 1.0, -1.0).finished();
  CHECK(excess_risk(ws, ws, SpdMatrix::identity(2)) == 0.0);
  const Vector w = ws + (Vector(2) << 3.0, 4.0).finished();
  CHECK(excess_risk(w, ws, SpdMatrix::identity(2)) == doctest::Approx(25.0));

  Rng rng = make_rng(50);
  const Index d = 5;
  const Matrix sigma = oracle::random_spd(d, rng);
  const Vector w_star = oracle::random_matrix(d, 1, rng);
  const Vector w_hat = oracle::random_matrix(d, 1, rng);
  const double sigma2 = 0.5;
  const Matrix l = sigma.llt().matrixL();
  std::normal_distribution<double> g;
  std::vector<double> draws(1000000);
  for (auto& v : draws) {
    Vector z(d);
    for (Index i = 0; i < d; ++i) z(i) = g(rng);
    const Vector xt = l * z;
    const double yt = xt.dot(w_star) + std::sqrt(sigma2) * g(rng);
    const double e = xt.dot(w_hat) - yt;
    v = e * e - sigma2;
  }
  const auto s = oracle::summarize(draws);
  CHECK(std::abs(s.mean - excess_risk(w_hat, w_star, SpdMatrix(sigma))) <= 3 * s.se);
}

TEST_CASE("conditional expected excess risk") {
  Matrix one(1, 1);
  one << 1.0;
  CHECK(conditional_expected_excess_risk(one, one, Vector::Constant(1, 0.7), SpdMatrix::identity(1), 1.0) ==
        doctest::Approx(1.0));

  Rng rng = make_rng(51);
  const Index n = 4, d = 9;
  const Matrix x = oracle::random_matrix(n, d, rng);
  const SpdMatrix sigma(oracle::random_spd(d, rng));
  const Vector ws = oracle::random_matrix(d, 1, rng);
  CHECK(conditional_expected_excess_risk(Matrix::Zero(d, n), x, ws, sigma, 1.0) ==
        doctest::Approx(ws.dot(sigma.matrix() * ws)));

  const Matrix q = optimal_response_linear(x, sigma, SpdMatrix::identity(d), 1.0).q;
  const double sigma2 = 0.8;
  std::vector<double> draws(100000);
  for (auto& v : draws) {
    const Vector xi = std::sqrt(sigma2) * oracle::random_matrix(n, 1, rng);
    v = excess_risk(q * (x * ws + xi), ws, sigma);
  }
  const auto s = oracle::summarize(draws);
  CHECK(std::abs(s.mean - conditional_expected_excess_risk(q, x, ws, sigma, sigma2)) <= 3 * s.se);
}

TEST_CASE("bias-variance decomposition") {
  Rng rng = make_rng(52);
  const Index n = 5, d = 12;
  const Matrix x = oracle::random_matrix(n, d, rng);
  const SpdMatrix sigma(oracle::random_spd(d, rng));
  const SpdMatrix phi(oracle::random_spd(d, rng));
  const double r2 = 2.0, sigma2 = 0.7;

  const auto zero = bias_variance(Matrix::Zero(d, n), x, sigma, phi, r2, sigma2);
  CHECK(zero.variance == 0.0);
  CHECK(zero.bias == doctest::Approx(r2 / d * (sigma.matrix() * phi.matrix()).trace()));

  const Matrix xs = oracle::random_matrix(d, d, rng);
  CHECK(bias_variance(xs.inverse(), xs, sigma, phi, r2, sigma2).bias < 1e-12);

  // Average the conditional risk over w* ~ N(0, (r2/d) Phi).
  const Matrix q = min_norm(x).q;
  const Matrix root = Eigen::LLT<Matrix>(phi.matrix() * (r2 / d)).matrixL();
  std::vector<double> draws(10000);
  for (auto& v : draws) {
    const Vector ws = root * oracle::random_matrix(d, 1, rng);
    v = conditional_expected_excess_risk(q, x, ws, sigma, sigma2);
  }
  const auto s = oracle::summarize(draws);
  const auto bv = bias_variance(q, x, sigma, phi, r2, sigma2);
  CHECK(std::abs(s.mean - (bv.bias + bv.variance)) <= 3 * s.se);
  // Direct trace form of the bias.
  const Matrix e = q * x - Matrix::Identity(d, d);
  CHECK(bv.bias == doctest::Approx(r2 / d * (sigma.matrix() * e * phi.matrix() * e.transpose()).trace()).epsilon(1e-10));
}

TEST_CASE("variance depends on Q only through Q Q^T") {
  Rng rng = make_rng(53);
  const Matrix x = oracle::random_matrix(6, 14, rng);
  const SpdMatrix sigma(oracle::random_spd(14, rng));
  const Matrix q = best_variance(x, sigma).q;
  const Matrix u = oracle::random_matrix(6, 6, rng).householderQr().householderQ();
  const double v1 = bias_variance(q, x, sigma, SpdMatrix::identity(14), 1.0, 1.0).variance;
  const double v2 = bias_variance(q * u, x, sigma, SpdMatrix::identity(14), 1.0, 1.0).variance;
  CHECK(std::abs(v1 - v2) < 1e-10 * v1);
}

TEST_CASE("best possible expected risk") {
  Rng rng = make_rng(54);
  const Matrix x = oracle::random_matrix(4, 10, rng);
  const SpdMatrix sigma(oracle::random_spd(10, rng));
  CHECK(expected_excess_risk_best_possible(x, sigma, 0.0) == 0.0);
  Matrix e1 = Matrix::Zero(1, 3);
  e1(0, 0) = 1.0;
  CHECK(expected_excess_risk_best_possible(e1, SpdMatrix::identity(3), 1.7) == doctest::Approx(1.7));

  const Vector ws = oracle::random_matrix(10, 1, rng);
  std::vector<double> draws(100000);
  for (auto& v : draws) {
    const Vector xi = oracle::random_matrix(4, 1, rng);
    v = excess_risk(best_possible(x, sigma, ws, xi).w, ws, sigma);
  }
  const auto s = oracle::summarize(draws);
  CHECK(std::abs(s.mean - expected_excess_risk_best_possible(x, sigma, 1.0)) <= 3 * s.se);
}

TEST_CASE("is_interpolator") {
  Rng rng = make_rng(55);
  const Matrix x = oracle::random_matrix(4, 10, rng);
  const Vector y = oracle::random_matrix(4, 1, rng);
  CHECK(is_interpolator(apply(min_norm(x), y), x, y));
  CHECK_FALSE(is_interpolator(Vector::Zero(10), x, y));
  const Vector ws = oracle::random_matrix(10, 1, rng);
  const Vector xi = y - x * ws;
  CHECK(is_interpolator(best_possible(x, SpdMatrix(oracle::random_spd(10, rng)), ws, xi).w, x, y));
}

TEST_CASE("Monte Carlo expected risk") {
  const EstimatorFactory mn = [](const ProblemInstance& inst, Rng&) {
    return FittedEstimator::linear(min_norm(inst.x), inst.y);
  };
  const auto zero = monte_carlo_expected_risk(mn, {20, 40, 0.0, 0.0, 0}, cov::Identity{},
                                              prior::Identity{}, 5, 1);
  CHECK(zero.excess_risk == 0.0);

  const auto a = monte_carlo_expected_risk(mn, {20, 40, 1.0, 1.0, 0}, cov::Autoregressive{0.5},
                                           prior::Identity{}, 8, 3, {true, 1});
  const auto b = monte_carlo_expected_risk(mn, {20, 40, 1.0, 1.0, 0}, cov::Autoregressive{0.5},
                                           prior::Identity{}, 8, 3, {true, 3});
  CHECK(a.excess_risk == b.excess_risk);
  CHECK(a.stderr_ == b.stderr_);
  CHECK(*a.bias == *b.bias);

  const auto iso = monte_carlo_expected_risk(mn, {500, 1000, 1.0, 1.0, 0}, cov::Identity{},
                                             prior::Identity{}, 20, 9);
  CHECK(iso.excess_risk == doctest::Approx(1.5).epsilon(0.1));
}

TEST_CASE("Monte Carlo counts failures") {
  const EstimatorFactory flaky = [](const ProblemInstance& inst, Rng& rng) {
    if (std::uniform_real_distribution<double>()(rng) < 0.5) throw NotConverged("flaky");
    return FittedEstimator::linear(min_norm(inst.x), inst.y);
  };
  const auto r = monte_carlo_expected_risk(flaky, {5, 10, 1.0, 1.0, 0}, cov::Identity{},
                                           prior::Identity{}, 40, 2);
  CHECK(r.failures > 0);
  CHECK(r.failures + r.replicates == 40);
}

TEST_CASE("dimension checks") {
  CHECK_THROWS_AS(excess_risk(Vector::Ones(3), Vector::Ones(2), SpdMatrix::identity(3)), DimensionMismatch);
  CHECK_THROWS_AS(bias_variance(Matrix::Zero(3, 2), Matrix::Zero(2, 4), SpdMatrix::identity(4),
                                SpdMatrix::identity(4), 1, 1),
                  DimensionMismatch);
}

}
