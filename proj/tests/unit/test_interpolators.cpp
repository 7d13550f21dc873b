#include <doctest.h>

#include <limits>

#include "../oracles.hpp"
#include "optinterp/error.hpp"
#include "optinterp/interpolators.hpp"
#include "optinterp/risk.hpp"

using namespace optinterp;

namespace {

struct Case {
  Matrix x;
  SpdMatrix sigma;
  SpdMatrix phi;
  Vector y;
};

Case random_case(Index n, Index d, Rng& rng) {
  return {oracle::random_matrix(n, d, rng), SpdMatrix(oracle::random_spd(d, rng)),
          SpdMatrix(oracle::random_spd(d, rng)), oracle::random_matrix(n, 1, rng)};
}

}  // namespace

TEST_SUITE("interpolators") {

TEST_CASE("scalar and square cases have a unique interpolator") {
  Matrix one(1, 1);
  one << 1.0;
  CHECK(apply(min_norm(one), Vector::Constant(1, 3.0))(0) == doctest::Approx(3.0));
  Matrix two(1, 1);
  two << 2.0;
  const auto q = optimal_response_linear(two, SpdMatrix(Matrix::Constant(1, 1, 3.0)),
                                         SpdMatrix(Matrix::Constant(1, 1, 0.7)), 2.5);
  CHECK(apply(q, Vector::Constant(1, 5.0))(0) == doctest::Approx(2.5));

  Rng rng = make_rng(20);
  const Case c = random_case(5, 5, rng);
  const Vector ref = c.x.lu().solve(c.y);
  CHECK((apply(min_norm(c.x), c.y) - ref).norm() < 1e-8 * ref.norm());
  CHECK((apply(best_variance(c.x, c.sigma), c.y) - ref).norm() < 1e-8 * ref.norm());
  CHECK((apply(optimal_bias(c.x, c.phi), c.y) - ref).norm() < 1e-8 * ref.norm());
  CHECK((apply(optimal_response_linear(c.x, c.sigma, c.phi, 1.3), c.y) - ref).norm() <
        1e-8 * ref.norm());
  const Vector xi = oracle::random_matrix(5, 1, rng);
  const Vector ws = c.x.lu().solve(c.y - xi);
  CHECK((best_possible(c.x, c.sigma, ws, xi).w - ref).norm() < 1e-8 * ref.norm());
}

TEST_CASE("min_norm projects onto the row space and has least norm") {
  Matrix x(1, 2);
  x << 1.0, 0.0;
  const Matrix q = min_norm(x).q;
  CHECK(q(0, 0) == doctest::Approx(1.0));
  CHECK(std::abs(q(1, 0)) < 1e-15);

  Rng rng = make_rng(21);
  const Matrix x3 = oracle::random_matrix(3, 6, rng);
  const Vector y = oracle::random_matrix(3, 1, rng);
  const Vector w = apply(min_norm(x3), y);
  // Null-space basis from a full SVD, independent of the library's pinv.
  Eigen::JacobiSVD<Matrix> svd(x3, Eigen::ComputeFullV);
  const Matrix null = svd.matrixV().rightCols(3);
  for (int i = 0; i < 100; ++i) {
    const Vector other = w + null * oracle::random_matrix(3, 1, rng);
    CHECK((x3 * other - y).norm() < 1e-10);
    CHECK(w.norm() <= other.norm() + 1e-12);
  }
}

TEST_CASE("best_variance reduces to min_norm at identity and lowers the variance") {
  Rng rng = make_rng(22);
  const Case c = random_case(6, 15, rng);
  CHECK(oracle::rel_diff(best_variance(c.x, SpdMatrix::identity(15)).q, min_norm(c.x).q) < 1e-10);
  const auto bv = bias_variance(best_variance(c.x, c.sigma).q, c.x, c.sigma, c.phi, 1.0, 1.0);
  const auto mn = bias_variance(min_norm(c.x).q, c.x, c.sigma, c.phi, 1.0, 1.0);
  CHECK(bv.variance <= mn.variance + 1e-12);
}

TEST_CASE("best_variance equals the whitened pseudoinverse form") {
  Rng rng = make_rng(23);
  const Case c = random_case(4, 9, rng);
  const Matrix is = inv_sqrt(c.sigma).matrix();
  const Matrix whitened = (c.x * is).completeOrthogonalDecomposition().pseudoInverse();
  CHECK(oracle::rel_diff(best_variance(c.x, c.sigma).q, is * whitened) < 1e-9);
}

TEST_CASE("optimal_bias is min_norm at identity and minimizes the bias") {
  Rng rng = make_rng(24);
  const Case c = random_case(4, 10, rng);
  CHECK(oracle::rel_diff(optimal_bias(c.x, SpdMatrix::identity(10)).q, min_norm(c.x).q) < 1e-10);
  const Matrix qb = optimal_bias(c.x, c.phi).q;
  const double b0 = bias_variance(qb, c.x, c.sigma, c.phi, 1.0, 1.0).bias;
  const Matrix xp = min_norm(c.x).q;
  const Matrix proj = Matrix::Identity(10, 10) - xp * c.x;
  for (int i = 0; i < 100; ++i) {
    const Matrix other = xp + proj * oracle::random_matrix(10, 4, rng);
    CHECK(b0 <= bias_variance(other, c.x, c.sigma, c.phi, 1.0, 1.0).bias + 1e-12);
  }
}

TEST_CASE("delta limits") {
  Rng rng = make_rng(25);
  const Case c = random_case(5, 12, rng);
  CHECK(oracle::rel_diff(optimal_response_linear(c.x, c.sigma, c.phi, 1e-9).q,
                         best_variance(c.x, c.sigma).q) < 1e-6);
  CHECK(oracle::rel_diff(optimal_response_linear(c.x, c.sigma, c.phi, 1e10).q,
                         optimal_bias(c.x, c.phi).q) < 1e-6);
  CHECK(oracle::rel_diff(optimal_response_linear(c.x, c.sigma, c.phi, 0.0).q,
                         best_variance(c.x, c.sigma).q) == 0.0);
  CHECK(oracle::rel_diff(
            optimal_response_linear(c.x, c.sigma, c.phi, std::numeric_limits<double>::infinity()).q,
            optimal_bias(c.x, c.phi).q) == 0.0);
  CHECK_THROWS_AS(optimal_response_linear(c.x, c.sigma, c.phi, -1.0), InvalidParams);
}

TEST_CASE("optimal_response_linear matches a brute-force convex minimizer") {
  Rng rng = make_rng(26);
  for (int rep = 0; rep < 5; ++rep) {
    const Case c = random_case(2, 4, rng);
    const double r2 = 0.5 + rep, sigma2 = 1.0 / (rep + 1);
    const Matrix ref = oracle::brute_force_optimal_q(c.x, c.sigma.matrix(), c.phi.matrix(), r2, sigma2);
    const Matrix q = optimal_response_linear(c.x, c.sigma, c.phi, r2 / sigma2).q;
    CHECK(oracle::rel_diff(q, ref) < 1e-5);
  }
}

TEST_CASE("every estimator interpolates") {
  Rng rng = make_rng(27);
  for (int rep = 0; rep < 5; ++rep) {
    const Case c = random_case(8, 20, rng);
    const double tol = 1e-8 * c.y.norm();
    CHECK((c.x * apply(min_norm(c.x), c.y) - c.y).norm() <= tol);
    CHECK((c.x * apply(best_variance(c.x, c.sigma), c.y) - c.y).norm() <= tol);
    CHECK((c.x * apply(optimal_bias(c.x, c.phi), c.y) - c.y).norm() <= tol);
    CHECK((c.x * apply(optimal_response_linear(c.x, c.sigma, c.phi, 2.0), c.y) - c.y).norm() <= tol);
    const Vector ws = oracle::random_matrix(20, 1, rng);
    const Vector xi = c.y - c.x * ws;
    CHECK((c.x * best_possible(c.x, c.sigma, ws, xi).w - c.y).norm() <= tol);
  }
}

TEST_CASE("best_possible") {
  Rng rng = make_rng(28);
  const Case c = random_case(5, 11, rng);
  const Vector ws = oracle::random_matrix(11, 1, rng);
  CHECK((best_possible(c.x, c.sigma, ws, Vector::Zero(5)).w - ws).norm() < 1e-12);
  const Vector xi = oracle::random_matrix(5, 1, rng);
  const Vector y = c.x * ws + xi;
  const double best = excess_risk(best_possible(c.x, c.sigma, ws, xi).w, ws, c.sigma);
  for (const Matrix& q : {min_norm(c.x).q, best_variance(c.x, c.sigma).q, optimal_bias(c.x, c.phi).q,
                          optimal_response_linear(c.x, c.sigma, c.phi, 1.0).q}) {
    CHECK(best <= excess_risk(q * y, ws, c.sigma) + 1e-12);
  }
}

TEST_CASE("apply is linear") {
  Rng rng = make_rng(29);
  const Matrix x = oracle::random_matrix(4, 7, rng);
  const LinearEstimator zero{Matrix::Zero(7, 4), "zero"};
  CHECK(apply(zero, Vector::Ones(4)).norm() == 0.0);
  const LinearEstimator id{Matrix::Identity(4, 4), "id"};
  CHECK((apply(id, Vector::Ones(4)) - Vector::Ones(4)).norm() == 0.0);
  const auto e = min_norm(x);
  const Vector y1 = oracle::random_matrix(4, 1, rng), y2 = oracle::random_matrix(4, 1, rng);
  CHECK((apply(e, 2.0 * y1 - 3.0 * y2) - (2.0 * apply(e, y1) - 3.0 * apply(e, y2))).norm() < 1e-12);
  CHECK_THROWS_AS(apply(e, Vector::Ones(3)), DimensionMismatch);
}

TEST_CASE("rank-deficient designs are rejected") {
  Matrix x = Matrix::Zero(2, 4);
  x.row(0) << 1, 2, 3, 4;
  x.row(1) = 2 * x.row(0);
  CHECK_THROWS_AS(min_norm(x), RankDeficient);
  CHECK_THROWS_AS(best_variance(x, SpdMatrix::identity(4)), RankDeficient);
}

}
