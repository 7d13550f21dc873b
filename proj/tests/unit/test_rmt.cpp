#include <doctest.h>

#include <cmath>

#include "optinterp/error.hpp"
#include "optinterp/rmt.hpp"

using namespace optinterp;

namespace {

// Fixed point of the Silverstein equation by bisection on
// g(v) = 1/v - gamma (psi rho1/(1 + rho1 v) + (1 - psi) rho2/(1 + rho2 v)),
// which is decreasing in v > 0 when gamma > 1.
double bisect_v0(double rho1, double rho2, double psi, double gamma) {
  auto g = [&](double v) {
    return 1.0 / v - gamma * (psi * rho1 / (1 + rho1 * v) + (1 - psi) * rho2 / (1 + rho2 * v));
  };
  double lo = 1e-12, hi = 1.0;
  while (g(hi) > 0) hi *= 2;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_SUITE("rmt") {

TEST_CASE("companion v0 closed values") {
  CHECK(companion_v0({1, 1, 0.5, 2}) == doctest::Approx(1.0));
  CHECK(companion_v0({4, 1, 0.5, 2}) == doctest::Approx(0.5));
  CHECK(companion_v0({1, 1, 0.17, 2}) == doctest::Approx(1.0));
  CHECK(companion_v0({1, 1, 0.5, 3}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(companion_v0({1, 1, 0.5, 1.0}), InvalidParams);
  CHECK_THROWS_AS(companion_v0({-1, 1, 0.5, 2.0}), InvalidParams);
}

TEST_CASE("v0 agrees with a bisection solve of the Silverstein equation") {
  for (double r1 : {0.5, 1.0, 4.0, 16.0, 100.0})
    for (double r2 : {0.001, 0.25, 1.0})
      for (double psi : {0.2, 0.5, 0.8})
        for (double gamma : {1.5, 2.0, 3.0}) {
          const StrongWeakParams p{r1, r2, psi, gamma};
          const double v0 = companion_v0(p);
          CHECK(v0 == doctest::Approx(bisect_v0(r1, r2, psi, gamma)).epsilon(1e-9));
          CHECK(std::abs(silverstein_residual(p, v0)) <= 1e-10 * (1.0 / v0));
        }
}

TEST_CASE("delta term") {
  CHECK(delta_term({1, 1, 0.5, 2}, 1.0) == doctest::Approx(0.25));
  CHECK(delta_term({4, 1, 0.5, 2}, 0.5) == doctest::Approx(10.0 / 9.0));
  const double v0 = 0.3;
  CHECK(delta_term({2, 1e-12, 0.5, 2}, v0) == doctest::Approx(0.5 * 4 / ((1 + 2 * v0) * (1 + 2 * v0))));
}

TEST_CASE("min-norm asymptotics") {
  const auto iso = min_norm_asymptotics({1, 1, 0.5, 2}, 1, 1);
  CHECK(iso.bias == doctest::Approx(0.5));
  CHECK(iso.variance == doctest::Approx(1.0));
  const auto sw = min_norm_asymptotics({4, 1, 0.5, 2}, 1, 1);
  CHECK(sw.bias == doctest::Approx(1.0));
  CHECK(sw.variance == doctest::Approx(1.25));
  // sqrt(rho2) V -> 1/2 as rho2 -> 0.
  const double rho2 = 1e-8;
  CHECK(std::sqrt(rho2) * min_norm_asymptotics({1, rho2, 0.5, 2}, 1, 1).variance ==
        doctest::Approx(0.5).epsilon(1e-3));
  // Isotropic identity V = sigma2 / (gamma - 1) for any gamma.
  CHECK(min_norm_asymptotics({2, 2, 0.3, 3}, 1, 1.5).variance == doctest::Approx(0.75));
}

TEST_CASE("best-variance asymptotics") {
  CHECK(best_variance_asymptotics({1, 1, 0.5, 2}, 1, 1) == doctest::Approx(1.5));
  CHECK(best_variance_asymptotics({100, 1, 0.5, 2}, 1, 1) == doctest::Approx(26.25));
  CHECK(best_variance_asymptotics({3, 1, 0.25, 2}, 2, 0) == doctest::Approx(2 * 1.5 * 0.5));
  const auto parts = best_variance_asymptotic_parts({4, 1, 0.5, 3}, 1, 2);
  CHECK(parts.total() == doctest::Approx(best_variance_asymptotics({4, 1, 0.5, 3}, 1, 2)));
}

TEST_CASE("divergence ordering") {
  double prev = 0;
  for (double rho2 : {1.0, 0.1, 0.01, 0.001}) {
    const double mn = min_norm_asymptotics({1, rho2, 0.5, 2}, 1, 1).total();
    CHECK(mn > prev);
    prev = mn;
    CHECK(best_variance_asymptotics({1, rho2, 0.5, 2}, 1, 1) <= 0.5 + 1.0);
  }
  const double bv10 = best_variance_asymptotics({10, 1, 0.5, 2}, 1, 1);
  const double bv100 = best_variance_asymptotics({100, 1, 0.5, 2}, 1, 1);
  const double mn10 = min_norm_asymptotics({10, 1, 0.5, 2}, 1, 1).total();
  const double mn100 = min_norm_asymptotics({100, 1, 0.5, 2}, 1, 1).total();
  CHECK(bv100 / bv10 > mn100 / mn10);
}

}
