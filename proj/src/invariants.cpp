#include "optinterp/invariants.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <sstream>

#include "optinterp/covest.hpp"
#include "optinterp/experiment.hpp"
#include "optinterp/interpolators.hpp"
#include "optinterp/model.hpp"
#include "optinterp/optim.hpp"
#include "optinterp/rf.hpp"
#include "optinterp/risk.hpp"
#include "optinterp/rmt.hpp"

namespace optinterp {

namespace {

double rel_diff(const Matrix& a, const Matrix& b) {
  const double scale = std::max(b.norm(), 1e-300);
  return (a - b).norm() / scale;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

// Outcome of one check body: passed flag and a human-readable detail.
struct Verdict {
  bool passed;
  std::string detail;
};

class Suite {
 public:
  explicit Suite(const InvariantOptions& opts) : opts_(opts) {}

  // value <= tol * scale
  Verdict within(double value, double tol) const {
    const double limit = tol * opts_.tolerance_scale;
    return {std::isfinite(value) && value <= limit, "value " + fmt(value) + ", limit " + fmt(limit)};
  }

  // |a - b| <= k * stderr * scale
  Verdict within_stderr(double a, double b, double stderr_, double k) const {
    const double limit = k * stderr_ * opts_.tolerance_scale;
    const double gap = std::abs(a - b);
    return {gap <= limit, "|" + fmt(a) + " - " + fmt(b) + "| = " + fmt(gap) + ", limit " + fmt(limit)};
  }

  // a <= b + k * stderr * scale
  Verdict at_most(double a, double b, double stderr_, double k) const {
    const double limit = b + k * stderr_ * opts_.tolerance_scale;
    return {a <= limit, fmt(a) + " <= " + fmt(limit)};
  }

  Rng rng() { return make_rng(opts_.seed, stream_++); }
  const InvariantOptions& options() const { return opts_; }

  void add(const std::string& module, const std::string& name, const std::function<Verdict(Rng&)>& body) {
    CheckResult r;
    r.module = module;
    r.name = name;
    Rng g = rng();
    const auto start = std::chrono::steady_clock::now();
    try {
      const Verdict v = body(g);
      r.passed = v.passed;
      r.detail = v.detail;
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    results_.push_back(std::move(r));
  }

  std::vector<CheckResult> take() { return std::move(results_); }

 private:
  InvariantOptions opts_;
  std::uint64_t stream_ = 0;
  std::vector<CheckResult> results_;
};

Verdict worst(const Suite& s, const std::vector<double>& values, double tol) {
  double m = 0.0;
  for (double v : values) m = std::isfinite(v) ? std::max(m, v) : v;
  return s.within(m, tol);
}

ProblemInstance small_instance(Rng& rng, Index n, Index d, const CovarianceSpec& cs,
                               const PriorSpec& ps, double r2 = 1.0, double sigma2 = 1.0) {
  const SpdMatrix sigma = build_covariance(cs, d);
  const SpdMatrix phi = build_prior(ps, sigma, d);
  return sample_instance({n, d, r2, sigma2, 0}, sigma, phi, rng);
}

Matrix random_spd(Index d, Rng& rng) {
  const Matrix a = standard_normal(d, d, rng);
  Matrix s = a * a.transpose() / static_cast<double>(d);
  s.diagonal().array() += 0.5;
  return s;
}

void numerics_checks(Suite& s) {
  s.add("numerics", "penrose conditions of pinv", [&](Rng& rng) {
    const Matrix x = standard_normal(8, 20, rng);
    const Matrix m = pinv(x);
    const Matrix xm = x * m;
    const Matrix mx = m * x;
    return worst(s, {rel_diff(xm * x, x), rel_diff(mx * m, m), rel_diff(xm.transpose(), xm),
                     rel_diff(mx.transpose(), mx)},
                 1e-9);
  });
  s.add("numerics", "pinv is an involution on full-rank matrices", [&](Rng& rng) {
    const Matrix x = standard_normal(12, 30, rng);
    return s.within(rel_diff(pinv(pinv(x)), x), 1e-9);
  });
  s.add("numerics", "pinv equals X^T (X X^T)^-1 for full row rank", [&](Rng& rng) {
    const Matrix x = standard_normal(15, 40, rng);
    const Matrix explicit_form = x.transpose() * (x * x.transpose()).inverse();
    return s.within(rel_diff(pinv(x), explicit_form), 1e-9);
  });
  s.add("numerics", "inv_sqrt squared is the inverse", [&](Rng& rng) {
    const SpdMatrix spd(random_spd(30, rng));
    const Matrix r = inv_sqrt(spd).matrix();
    return s.within(rel_diff(r * r, spd.inverse()), 1e-9);
  });
}

void model_checks(Suite& s) {
  s.add("model", "strong-weak eigenvalue multiset", [&](Rng&) {
    const Index d = 101;
    const SpdMatrix sigma = build_covariance(cov::StrongWeak{3.0, 0.5, 0.3}, d);
    const Vector diag = sigma.diagonal_entries();
    const auto strong = (diag.array() == 3.0).count();
    const auto weak = (diag.array() == 0.5).count();
    const bool ok = sigma.is_diagonal() && strong == 30 && weak == 71;
    return Verdict{ok, std::to_string(strong) + " strong, " + std::to_string(weak) + " weak"};
  });
  s.add("model", "sampling is bitwise reproducible", [&](Rng&) {
    const SpdMatrix sigma = build_covariance(cov::Autoregressive{0.5}, 40);
    const SpdMatrix phi = build_prior(prior::Identity{}, sigma, 40);
    Rng a = make_rng(s.options().seed, 99);
    Rng b = make_rng(s.options().seed, 99);
    const auto i1 = sample_instance({10, 40, 1.0, 1.0, 0}, sigma, phi, a);
    const auto i2 = sample_instance({10, 40, 1.0, 1.0, 0}, sigma, phi, b);
    const bool ok = i1.x == i2.x && i1.w_star == i2.w_star && i1.xi == i2.xi && i1.y == i2.y;
    return Verdict{ok, ok ? "identical" : "differs"};
  });
  s.add("model", "y - X w* - xi vanishes", [&](Rng& rng) {
    const auto inst = small_instance(rng, 20, 60, cov::Exponential{}, prior::Identity{});
    const Vector r = inst.y - inst.x * inst.w_star - inst.xi;
    return s.within(r.cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, inst.y.cwiseAbs().maxCoeff()));
  });
}

void interpolator_checks(Suite& s) {
  s.add("interpolators", "every estimator interpolates", [&](Rng& rng) {
    const auto inst = small_instance(rng, 20, 50, cov::Autoregressive{0.5}, prior::Autoregressive{0.3});
    const double delta = 1.0;
    std::vector<double> res;
    for (const auto& e : {min_norm(inst.x), best_variance(inst.x, inst.sigma),
                          optimal_bias(inst.x, inst.phi),
                          optimal_response_linear(inst.x, inst.sigma, inst.phi, delta)}) {
      res.push_back((inst.x * apply(e, inst.y) - inst.y).norm() / inst.y.norm());
    }
    const auto wb = best_possible(inst.x, inst.sigma, inst.w_star, inst.xi);
    res.push_back((inst.x * wb.w - inst.y).norm() / inst.y.norm());
    return worst(s, res, 1e-8);
  });
  s.add("interpolators", "optimal response-linear minimizes B + V over interpolating maps",
        [&](Rng& rng) {
          const auto inst = small_instance(rng, 15, 40, cov::Exponential{}, prior::Autoregressive{0.5});
          const double r2 = 1.0, s2 = 0.5;
          const double delta = r2 / s2;
          auto total = [&](const Matrix& q) {
            const auto bv = bias_variance(q, inst.x, inst.sigma, inst.phi, r2, s2);
            return bv.bias + bv.variance;
          };
          const Matrix q_opt = optimal_response_linear(inst.x, inst.sigma, inst.phi, delta).q;
          const double best = total(q_opt);
          std::vector<Matrix> others = {min_norm(inst.x).q, best_variance(inst.x, inst.sigma).q,
                                        optimal_bias(inst.x, inst.phi).q};
          const Matrix xp = pinv(inst.x);
          const Matrix null_proj = Matrix::Identity(inst.x.cols(), inst.x.cols()) - xp * inst.x;
          for (int k = 0; k < 5; ++k) {
            others.push_back(q_opt + 0.1 * null_proj * standard_normal(inst.x.cols(), inst.x.rows(), rng));
          }
          double worst_gap = -1e300;
          for (const auto& q : others) worst_gap = std::max(worst_gap, (best - total(q)) / best);
          return s.within(std::max(worst_gap, 0.0), 1e-10);
        });
  s.add("interpolators", "delta limits recover best-variance and optimal-bias", [&](Rng& rng) {
    const auto inst = small_instance(rng, 10, 30, cov::Autoregressive{0.4}, prior::Autoregressive{0.6});
    const Matrix lo = optimal_response_linear(inst.x, inst.sigma, inst.phi, 1e-9).q;
    const Matrix hi = optimal_response_linear(inst.x, inst.sigma, inst.phi, 1e9).q;
    return worst(s, {rel_diff(lo, best_variance(inst.x, inst.sigma).q),
                     rel_diff(hi, optimal_bias(inst.x, inst.phi).q)},
                 1e-6);
  });
}

void optim_checks(Suite& s) {
  s.add("optim", "preconditioned GD converges to the closed-form implicit bias", [&](Rng& rng) {
    const auto inst = small_instance(rng, 5, 12, cov::Autoregressive{0.5}, prior::Identity{});
    const Vector w0 = standard_normal(12, 1, rng);
    const auto res = precond_gd(inst.x, inst.y, inst.sigma, w0);
    const Vector closed = implicit_bias_closed_form(inst.x, inst.sigma, w0, inst.y);
    return s.within(rel_diff(res.w, closed), 1e-6);
  });
  s.add("optim", "limit's noise response is independent of w0", [&](Rng& rng) {
    const auto inst = small_instance(rng, 8, 20, cov::Exponential{}, prior::Identity{});
    const Vector signal = inst.x * inst.w_star;
    const Vector noise_fit = variance_optimal_operator(inst.x, inst.sigma) * inst.xi;
    std::vector<double> res;
    for (int k = 0; k < 3; ++k) {
      const Vector w0 = standard_normal(20, 1, rng);
      const Vector with_noise = precond_gd(inst.x, inst.y, inst.sigma, w0).w;
      const Vector without = precond_gd(inst.x, signal, inst.sigma, w0).w;
      res.push_back(rel_diff(with_noise - without, noise_fit));
    }
    return worst(s, res, 1e-6);
  });
  s.add("optim", "training residual is monotone", [&](Rng& rng) {
    const auto inst = small_instance(rng, 10, 25, cov::Autoregressive{0.7}, prior::Identity{});
    GDConfig cfg;
    cfg.record_history = true;
    const auto res = precond_gd(inst.x, inst.y, inst.sigma, Vector::Zero(25), cfg);
    double worst_rise = 0.0;
    const auto& h = res.trace.residual_history;
    for (std::size_t i = 1; i < h.size(); ++i) worst_rise = std::max(worst_rise, h[i] - h[i - 1]);
    return s.within(worst_rise, 1e-12);
  });
  s.add("optim", "GD from w_O_init reaches the optimal response-linear interpolator", [&](Rng& rng) {
    const auto inst = small_instance(rng, 6, 15, cov::Autoregressive{0.5}, prior::Autoregressive{0.5});
    const double delta = 2.0;
    const Vector w0 = w_O_init(inst.x, inst.phi, delta, inst.y);
    const auto res = precond_gd(inst.x, inst.y, inst.sigma, w0);
    const Vector target = apply(optimal_response_linear(inst.x, inst.sigma, inst.phi, delta), inst.y);
    return s.within(rel_diff(res.w, target), 1e-6);
  });
}

void covest_checks(Suite& s) {
  s.add("covest", "ridge and Ledoit-Wolf preconditioning collapse to min-norm", [&](Rng& rng) {
    const auto inst = small_instance(rng, 20, 50, cov::Autoregressive{0.5}, prior::Identity{});
    const Vector target = apply(min_norm(inst.x), inst.y);
    std::vector<double> res;
    for (double lambda : {0.1, 1.0, 10.0}) {
      const SpdMatrix se = ridge_empirical(inst.x, lambda);
      res.push_back(rel_diff(implicit_bias_closed_form(inst.x, se, Vector::Zero(50), inst.y), target));
    }
    const SpdMatrix lw = ledoit_wolf(inst.x);
    res.push_back(rel_diff(implicit_bias_closed_form(inst.x, lw, Vector::Zero(50), inst.y), target));
    return worst(s, res, 1e-8);
  });
  s.add("covest", "graphical lasso output is symmetric positive definite", [&](Rng& rng) {
    const auto inst = small_instance(rng, 50, 80, cov::Autoregressive{0.5}, prior::Identity{});
    const auto fit = graphical_lasso_fit(inst.x);
    const double asym = (fit.covariance - fit.covariance.transpose()).cwiseAbs().maxCoeff();
    Eigen::SelfAdjointEigenSolver<Matrix> es(fit.covariance, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    return Verdict{asym == 0.0 && lmin > 0.0 && fit.converged,
                   "asymmetry " + fmt(asym) + ", lambda_min " + fmt(lmin) + ", sweeps " +
                       std::to_string(fit.sweeps)};
  });
  s.add("covest", "empirical interpolators interpolate under misspecification", [&](Rng& rng) {
    const auto inst = small_instance(rng, 20, 45, cov::Exponential{}, prior::Identity{});
    const SpdMatrix wrong_sigma(random_spd(45, rng));
    const SpdMatrix wrong_phi(random_spd(45, rng));
    std::vector<double> res;
    for (double delta : {0.1, 7.0, 300.0}) {
      for (const auto& e : {w_Oe(inst.x, wrong_sigma, delta), w_Oe_phi(inst.x, wrong_sigma, delta, wrong_phi)}) {
        res.push_back((inst.x * apply(e, inst.y) - inst.y).norm() / inst.y.norm());
      }
    }
    return worst(s, res, 1e-8);
  });
  s.add("covest", "cross-validation is deterministic under a fixed seed", [&](Rng& rng) {
    const auto inst = small_instance(rng, 40, 80, cov::Autoregressive{0.5}, prior::Identity{});
    const SpdMatrix se = ledoit_wolf(inst.x);
    const SpdMatrix id = SpdMatrix::identity(80);
    Rng a = make_rng(s.options().seed, 7);
    Rng b = make_rng(s.options().seed, 7);
    const auto c1 = cross_validate_delta(inst.x, inst.y, se, id, {}, a);
    const auto c2 = cross_validate_delta(inst.x, inst.y, se, id, {}, b);
    const bool ok = c1.delta == c2.delta && c1.errors == c2.errors;
    return Verdict{ok, "selected " + fmt(c1.delta)};
  });
}

void risk_checks(Suite& s) {
  s.add("risk", "B + V equals the w*-average of the conditional risk", [&](Rng& rng) {
    const Index n = 12, d = 30;
    const auto inst = small_instance(rng, n, d, cov::Autoregressive{0.5}, prior::Autoregressive{0.3});
    const double r2 = 1.0, s2 = 0.7;
    const Matrix q = min_norm(inst.x).q;
    const auto bv = bias_variance(q, inst.x, inst.sigma, inst.phi, r2, s2);
    const Matrix phi_sqrt = sqrt_spd(inst.phi).matrix();
    std::vector<double> draws(4000);
    for (auto& v : draws) {
      const Vector w = std::sqrt(r2 / d) * (phi_sqrt * standard_normal(d, 1, rng));
      v = conditional_expected_excess_risk(q, inst.x, w, inst.sigma, s2);
    }
    const auto ms = mean_stderr(draws);
    return s.within_stderr(bv.bias + bv.variance, ms.mean, ms.stderr_, 3.0);
  });
  s.add("risk", "variance is invariant under orthogonal mixing of responses", [&](Rng& rng) {
    const auto inst = small_instance(rng, 10, 25, cov::Exponential{}, prior::Identity{});
    const Matrix q = best_variance(inst.x, inst.sigma).q;
    const Eigen::HouseholderQR<Matrix> qr(standard_normal(10, 10, rng));
    const Matrix u = qr.householderQ();
    const double v1 = bias_variance(q, inst.x, inst.sigma, inst.phi, 1.0, 1.0).variance;
    const double v2 = bias_variance(q * u, inst.x, inst.sigma, inst.phi, 1.0, 1.0).variance;
    return s.within(std::abs(v1 - v2) / v1, 1e-10);
  });
  s.add("risk", "risk quantities are non-negative", [&](Rng& rng) {
    const auto inst = small_instance(rng, 10, 30, cov::Autoregressive{0.5}, prior::Identity{});
    double lowest = 1e300;
    for (const auto& e : {min_norm(inst.x), best_variance(inst.x, inst.sigma),
                          optimal_bias(inst.x, inst.phi),
                          optimal_response_linear(inst.x, inst.sigma, inst.phi, 1.0)}) {
      const auto bv = bias_variance(e.q, inst.x, inst.sigma, inst.phi, 1.0, 1.0);
      lowest = std::min({lowest, bv.bias, bv.variance,
                         conditional_expected_excess_risk(e.q, inst.x, inst.w_star, inst.sigma, 1.0),
                         excess_risk(apply(e, inst.y), inst.w_star, inst.sigma)});
    }
    lowest = std::min(lowest, expected_excess_risk_best_possible(inst.x, inst.sigma, 1.0));
    return Verdict{lowest >= 0.0, "minimum " + fmt(lowest)};
  });
  s.add("risk", "optimal response-linear has the lowest Monte Carlo risk", [&](Rng&) {
    ProblemConfig cfg{40, 100, 1.0, 0.5, 0};
    Verdict out{true, ""};
    const std::vector<std::pair<CovarianceSpec, PriorSpec>> regimes = {
        {cov::Autoregressive{0.5}, prior::Identity{}},
        {cov::StrongWeak{4.0, 0.25, 0.5}, prior::Identity{}},
        {cov::Exponential{}, prior::Autoregressive{0.5}}};
    for (const auto& [cs, ps] : regimes) {
      const double delta = cfg.snr();
      auto report = [&](auto make) {
        return monte_carlo_expected_risk(
            [&](const ProblemInstance& inst, Rng&) { return FittedEstimator::linear(make(inst), inst.y); },
            cfg, cs, ps, 60, s.options().seed, {false, s.options().threads});
      };
      const auto opt = report([&](const ProblemInstance& i) {
        return optimal_response_linear(i.x, i.sigma, i.phi, delta);
      });
      for (const auto& other : {report([](const ProblemInstance& i) { return min_norm(i.x); }),
                                report([](const ProblemInstance& i) { return best_variance(i.x, i.sigma); }),
                                report([](const ProblemInstance& i) { return optimal_bias(i.x, i.phi); })}) {
        const Verdict v = s.at_most(opt.excess_risk, other.excess_risk, other.stderr_, 2.0);
        out.passed = out.passed && v.passed;
        if (!out.detail.empty()) out.detail += "; ";
        out.detail += v.detail;
      }
    }
    return out;
  });
}

void rmt_checks(Suite& s) {
  s.add("rmt", "v(0) solves the Silverstein equation", [&](Rng&) {
    double worst_res = 0.0;
    for (double r1 : {0.5, 1.0, 4.0, 100.0}) {
      for (double r2 : {0.001, 0.25, 1.0, 3.0}) {
        for (double psi : {0.0, 0.3, 0.5, 1.0}) {
          for (double g : {1.2, 2.0, 5.0}) {
            const StrongWeakParams p{r1, r2, psi, g};
            const double v = companion_v0(p);
            worst_res = std::max(worst_res, std::abs(silverstein_residual(p, v)) * v);
          }
        }
      }
    }
    return s.within(worst_res, 1e-10);
  });
  s.add("rmt", "divergence ordering of the two regimes", [&](Rng&) {
    // rho2 -> 0: min-norm blows up, best-variance stays bounded.
    const double mn_small = min_norm_asymptotics({1.0, 1e-4, 0.5, 2.0}, 1.0, 1.0).total();
    const double mn_mid = min_norm_asymptotics({1.0, 1e-2, 0.5, 2.0}, 1.0, 1.0).total();
    const double bv_small = best_variance_asymptotics({1.0, 1e-4, 0.5, 2.0}, 1.0, 1.0);
    // rho1 -> inf: best-variance linear in rho1, min-norm like sqrt(rho1).
    const double bv_a = best_variance_asymptotics({100.0, 1.0, 0.5, 2.0}, 1.0, 1.0);
    const double bv_b = best_variance_asymptotics({400.0, 1.0, 0.5, 2.0}, 1.0, 1.0);
    const double mn_a = min_norm_asymptotics({100.0, 1.0, 0.5, 2.0}, 1.0, 1.0).total();
    const double mn_b = min_norm_asymptotics({400.0, 1.0, 0.5, 2.0}, 1.0, 1.0).total();
    const bool ok = mn_small > mn_mid && mn_small > 10.0 && bv_small <= 0.5 + 1.0 &&
                    bv_b / bv_a > 3.5 && mn_b / mn_a > 1.8 && mn_b / mn_a < 2.2;
    return Verdict{ok, "min-norm " + fmt(mn_mid) + " -> " + fmt(mn_small) + ", best-variance " +
                           fmt(bv_small) + "; growth x4 rho1: best-variance " + fmt(bv_b / bv_a) +
                           ", min-norm " + fmt(mn_b / mn_a)};
  });
  s.add("rmt", "finite-sample agreement at n = 1000, gamma = 2", [&](Rng&) {
    const Index n = 1000, d = 2000;
    const std::size_t reps = 6;
    double worst_rel = 0.0;
    for (double r1 : {1.0, 4.0, 16.0}) {
      for (double r2 : {0.25, 1.0}) {
        const StrongWeakParams p{r1, r2, 0.5, 2.0};
        const auto mn = min_norm_asymptotics(p, 1.0, 1.0);
        const double bv = best_variance_asymptotics(p, 1.0, 1.0);
        const ProblemConfig cfg{n, d, 1.0, 1.0, 0};
        const auto mn_mc = monte_carlo_expected_risk(
            [](const ProblemInstance& i, Rng&) { return FittedEstimator::linear(min_norm(i.x), i.y); },
            cfg, cov::StrongWeak{r1, r2, 0.5}, prior::Identity{}, reps, s.options().seed,
            {true, s.options().threads});
        const auto bv_mc = monte_carlo_expected_risk(
            [](const ProblemInstance& i, Rng&) {
              return FittedEstimator::linear(best_variance(i.x, i.sigma), i.y);
            },
            cfg, cov::StrongWeak{r1, r2, 0.5}, prior::Identity{}, reps, s.options().seed,
            {false, s.options().threads});
        worst_rel = std::max({worst_rel, std::abs(*mn_mc.bias - mn.bias) / mn.bias,
                              std::abs(*mn_mc.variance - mn.variance) / mn.variance,
                              std::abs(bv_mc.excess_risk - bv) / bv});
      }
    }
    return s.within(worst_rel, 0.10);
  });
}

void rf_checks(Suite& s) {
  s.add("rf", "GD from rf_init reaches rf_optimal", [&](Rng& rng) {
    const Index n = 10, d = 8, width = 30;
    const SpdMatrix phi = SpdMatrix::identity(d);
    const auto inst = sample_sphere_instance({n, d, 2.0, 1.0, 0}, phi, rng);
    const RFModel model = make_rf_model(width, d, Activation::Relu, rng);
    const auto mom = estimate_second_moments(model, 50 * width, rng);
    const Matrix z = rf_features(inst.x, model);
    const double delta = 2.0;
    const Vector target = apply(rf_optimal(inst.x, z, mom, phi, delta), inst.y);
    const Vector a0 = rf_init(mom, phi, inst.x, delta, inst.y);
    const auto res = rf_pgd(z, inst.y, mom.sigma_z, a0);
    return s.within(rel_diff(res.w, target), 1e-6);
  });
  s.add("rf", "rf estimators interpolate", [&](Rng& rng) {
    const Index n = 30, d = 10, width = 60;
    const SpdMatrix phi = SpdMatrix::identity(d);
    const auto inst = sample_sphere_instance({n, d, 5.0, 1.0, 0}, phi, rng);
    const RFModel model = make_rf_model(width, d, Activation::Tanh, rng);
    const auto mom = estimate_second_moments(model, 50 * width, rng);
    const Matrix z = rf_features(inst.x, model);
    std::vector<double> res;
    for (const auto& e : {rf_min_norm(z), rf_optimal(inst.x, z, mom, phi, 5.0)}) {
      res.push_back((z * apply(e, inst.y) - inst.y).norm() / inst.y.norm());
    }
    return worst(s, res, 1e-6);
  });
  s.add("rf", "rf_optimal risk is at most rf_min_norm's", [&](Rng&) {
    const Index n = 60, d = 20, width = 160;
    const SpdMatrix phi = SpdMatrix::identity(d);
    std::vector<double> diff(20);
    for (std::size_t r = 0; r < diff.size(); ++r) {
      Rng rng = make_rng(s.options().seed, 1000 + r);
      const auto inst = sample_sphere_instance({n, d, 5.0, 1.0, 0}, phi, rng);
      const RFModel model = make_rf_model(width, d, Activation::Relu, rng);
      const auto fit = estimate_second_moments(model, 50 * width, rng);
      const auto eval = estimate_second_moments(model, 200 * width, rng);
      const Matrix z = rf_features(inst.x, model);
      const double a = rf_conditional_expected_risk(rf_optimal(inst.x, z, fit, phi, 5.0).q, inst.x,
                                                    inst.w_star, eval, inst.sigma, 1.0);
      const double b = rf_conditional_expected_risk(rf_min_norm(z).q, inst.x, inst.w_star, eval,
                                                    inst.sigma, 1.0);
      diff[r] = a - b;
    }
    const auto ms = mean_stderr(diff);
    return s.at_most(ms.mean, 0.0, ms.stderr_, 2.0);
  });
  s.add("rf", "doubling moment samples moves rf_optimal risk by < 2%", [&](Rng& rng) {
    const Index n = 60, d = 20, width = 120;
    const SpdMatrix phi = SpdMatrix::identity(d);
    const auto inst = sample_sphere_instance({n, d, 5.0, 1.0, 0}, phi, rng);
    const RFModel model = make_rf_model(width, d, Activation::Relu, rng);
    const auto eval = estimate_second_moments(model, 400 * width, rng);
    const auto m1 = estimate_second_moments(model, 50 * width, rng);
    const auto m2 = estimate_second_moments(model, 100 * width, rng);
    const Matrix z = rf_features(inst.x, model);
    auto risk = [&](const RFSecondMoments& m) {
      return rf_conditional_expected_risk(rf_optimal(inst.x, z, m, phi, 5.0).q, inst.x,
                                          inst.w_star, eval, inst.sigma, 1.0);
    };
    const double r1 = risk(m1);
    const double r2 = risk(m2);
    return s.within(std::abs(r1 - r2) / r2, 0.02);
  });
  s.add("rf", "moment estimates are bitwise reproducible", [&](Rng& rng) {
    const RFModel model = make_rf_model(40, 10, Activation::Relu, rng);
    Rng a = make_rng(s.options().seed, 5);
    Rng b = make_rng(s.options().seed, 5);
    const auto m1 = estimate_second_moments(model, 5000, a, 1);
    const auto m2 = estimate_second_moments(model, 5000, b, 2);
    const bool ok = m1.sigma_z.matrix() == m2.sigma_z.matrix() && m1.sigma_zx == m2.sigma_zx;
    return Verdict{ok, ok ? "identical across thread counts" : "differs"};
  });
}

void cli_checks(Suite& s) {
  s.add("cli", "experiment output is byte-identical across runs and thread counts", [&](Rng&) {
    ExperimentSpec spec;
    spec.name = "determinism";
    spec.covariance = cov::StrongWeak{1.0, 0.1, 0.5};
    spec.n = 30;
    spec.gamma = 2.0;
    spec.replicates = 3;
    spec.seed = s.options().seed;
    spec.sweep = SweepSpec{"sigma2", {0.5, 1.0}};
    spec.estimators = {"min_norm", "optimal_response_linear", "w_Oe", "best_possible"};
    spec.rmt_predictions = true;
    spec.empirical.cv.repeats = 3;
    const std::string a = to_csv(run_experiment(spec, {1}));
    const std::string b = to_csv(run_experiment(spec, {1}));
    const std::string c = to_csv(run_experiment(spec, {3}));
    const bool ok = a == b && a == c;
    return Verdict{ok, ok ? std::to_string(a.size()) + " bytes, identical" : "outputs differ"};
  });
  s.add("cli", "built-in experiments validate", [&](Rng&) {
    std::string names;
    for (const auto& name : builtin_names()) {
      builtin_spec(name).validate();
      names += name + " ";
    }
    return Verdict{builtin_names().size() == 7, names};
  });
  s.add("cli", "plot data round-trips", [&](Rng& rng) {
    std::vector<ResultRow> rows;
    for (int i = 0; i < 4; ++i) {
      ResultRow r;
      r.experiment = "roundtrip";
      r.estimator = "min_norm";
      r.replicate = "mean";
      r.sweep_value = 0.1 * (i + 1);
      r.excess_risk = std::abs(standard_normal(1, 1, rng)(0, 0));
      r.stderr_ = 0.01 * i;
      rows.push_back(r);
    }
    const auto dir = std::filesystem::temp_directory_path() /
                     ("optinterp_invariants_" + std::to_string(s.options().seed));
    const auto files = emit_plotdata(rows, dir);
    const auto back = read_plotdata(files.at(0));
    bool ok = back.size() == rows.size();
    for (std::size_t i = 0; ok && i < back.size(); ++i) {
      ok = back[i].sweep_value == rows[i].sweep_value && back[i].mean == *rows[i].excess_risk &&
           back[i].stderr_ == *rows[i].stderr_;
    }
    std::filesystem::remove_all(dir);
    return Verdict{ok, std::to_string(back.size()) + " points"};
  });
}

}  // namespace

std::vector<CheckResult> run_invariant_suite(const InvariantOptions& opts) {
  Suite s(opts);
  numerics_checks(s);
  model_checks(s);
  interpolator_checks(s);
  optim_checks(s);
  covest_checks(s);
  risk_checks(s);
  rmt_checks(s);
  rf_checks(s);
  cli_checks(s);
  return s.take();
}

bool all_passed(const std::vector<CheckResult>& results) {
  for (const auto& r : results) {
    if (!r.passed) return false;
  }
  return !results.empty();
}

}  // namespace optinterp
