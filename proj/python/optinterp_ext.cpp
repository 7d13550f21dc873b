#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "optinterp/covest.hpp"
#include "optinterp/experiment.hpp"
#include "optinterp/interpolators.hpp"
#include "optinterp/optim.hpp"
#include "optinterp/rf.hpp"
#include "optinterp/risk.hpp"
#include "optinterp/rmt.hpp"

namespace py = pybind11;
using namespace optinterp;

namespace {

SpdMatrix spd(const Matrix& m) { return SpdMatrix(m); }

SpdMatrix spd_or_identity(const std::optional<Matrix>& m, Index d) {
  return m ? SpdMatrix(*m) : SpdMatrix::identity(d);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Response-linear interpolators for overparametrized least squares";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionMismatch>(m, "DimensionMismatch", base.ptr());
  py::register_exception<NonFiniteInput>(m, "NonFiniteInput", base.ptr());
  py::register_exception<NotPositiveDefinite>(m, "NotPositiveDefinite", base.ptr());
  py::register_exception<RankDeficient>(m, "RankDeficient", base.ptr());
  py::register_exception<InvalidSpec>(m, "InvalidSpec", base.ptr());
  py::register_exception<InvalidParams>(m, "InvalidParams", base.ptr());
  py::register_exception<SingularSample>(m, "SingularSample", base.ptr());
  py::register_exception<InsufficientData>(m, "InsufficientData", base.ptr());
  py::register_exception<NotConverged>(m, "NotConverged", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  // Every estimator returns its n -> d operator Q; w = Q @ y.
  m.def("min_norm", [](const Matrix& x) { return min_norm(x).q; }, py::arg("x"));
  m.def("best_variance", [](const Matrix& x, const Matrix& sigma) {
    return best_variance(x, spd(sigma)).q;
  }, py::arg("x"), py::arg("sigma"));
  m.def("optimal_bias", [](const Matrix& x, const Matrix& phi) {
    return optimal_bias(x, spd(phi)).q;
  }, py::arg("x"), py::arg("phi"));
  m.def("optimal_response_linear",
        [](const Matrix& x, const Matrix& sigma, std::optional<Matrix> phi, double delta) {
          return optimal_response_linear(x, spd(sigma), spd_or_identity(phi, x.cols()), delta).q;
        },
        py::arg("x"), py::arg("sigma"), py::arg("phi") = py::none(), py::arg("delta"));
  m.def("best_possible", [](const Matrix& x, const Matrix& sigma, const Vector& w_star,
                            const Vector& xi) {
    return best_possible(x, spd(sigma), w_star, xi).w;
  }, py::arg("x"), py::arg("sigma"), py::arg("w_star"), py::arg("xi"));

  m.def("excess_risk", [](const Vector& w, const Vector& w_star, const Matrix& sigma) {
    return excess_risk(w, w_star, spd(sigma));
  }, py::arg("w"), py::arg("w_star"), py::arg("sigma"));
  m.def("bias_variance",
        [](const Matrix& q, const Matrix& x, const Matrix& sigma, std::optional<Matrix> phi,
           double r2, double sigma2) {
          const auto bv = bias_variance(q, x, spd(sigma), spd_or_identity(phi, x.cols()), r2, sigma2);
          return py::make_tuple(bv.bias, bv.variance);
        },
        py::arg("q"), py::arg("x"), py::arg("sigma"), py::arg("phi") = py::none(),
        py::arg("r2"), py::arg("sigma2"));
  m.def("is_interpolator", &is_interpolator, py::arg("w"), py::arg("x"), py::arg("y"),
        py::arg("tol") = 1e-8);

  m.def("precond_gd",
        [](const Matrix& x, const Vector& y, const Matrix& p, const Vector& w0, double step_safety,
           std::optional<std::size_t> max_iters, double tol) {
          GDConfig cfg;
          cfg.step_safety = step_safety;
          cfg.max_iters = max_iters;
          cfg.residual_tol = tol;
          const auto r = precond_gd(x, y, spd(p), w0, cfg);
          return py::make_tuple(r.w, r.trace.iterations_used, r.trace.final_residual);
        },
        py::arg("x"), py::arg("y"), py::arg("preconditioner"), py::arg("w0"),
        py::arg("step_safety") = 0.5, py::arg("max_iters") = py::none(),
        py::arg("residual_tol") = 1e-10);
  m.def("w_O_init", [](const Matrix& x, const Matrix& phi, double delta, const Vector& y) {
    return w_O_init(x, spd(phi), delta, y);
  }, py::arg("x"), py::arg("phi"), py::arg("delta"), py::arg("y"));

  m.def("sample_covariance", &sample_covariance, py::arg("x"), py::arg("center") = true);
  m.def("graphical_lasso", [](const Matrix& x, double alpha, std::size_t max_sweeps, double tol) {
    GlassoConfig cfg;
    cfg.alpha = alpha;
    cfg.max_sweeps = max_sweeps;
    cfg.dual_gap_tol = tol;
    const auto r = graphical_lasso_fit(x, cfg);
    return py::make_tuple(r.covariance, r.precision, r.sweeps);
  }, py::arg("x"), py::arg("alpha") = 0.25, py::arg("max_sweeps") = 100,
     py::arg("tol") = 1e-4);
  m.def("ledoit_wolf", [](const Matrix& x, bool center) {
    return ledoit_wolf(x, center).matrix();
  }, py::arg("x"), py::arg("center") = true);
  m.def("ledoit_wolf_shrinkage", &ledoit_wolf_shrinkage, py::arg("x"), py::arg("center") = true);
  m.def("cross_validate_delta",
        [](const Matrix& x, const Vector& y, const Matrix& sigma_e, std::optional<Matrix> phi,
           std::vector<double> grid, double holdout, std::size_t repeats, std::uint64_t seed) {
          SnrCvConfig cfg;
          if (!grid.empty()) cfg.grid = std::move(grid);
          cfg.holdout_fraction = holdout;
          cfg.repeats = repeats;
          Rng rng = make_rng(seed);
          const auto r = cross_validate_delta(x, y, spd(sigma_e), spd_or_identity(phi, x.cols()), cfg, rng);
          return py::make_tuple(r.delta, r.errors);
        },
        py::arg("x"), py::arg("y"), py::arg("sigma_e"), py::arg("phi") = py::none(),
        py::arg("grid") = std::vector<double>{}, py::arg("holdout_fraction") = 0.1,
        py::arg("repeats") = 10, py::arg("seed") = 0);

  m.def("companion_v0", [](double rho1, double rho2, double psi1, double gamma) {
    return companion_v0({rho1, rho2, psi1, gamma});
  }, py::arg("rho1"), py::arg("rho2"), py::arg("psi1"), py::arg("gamma"));
  m.def("min_norm_asymptotics", [](double rho1, double rho2, double psi1, double gamma,
                                   double r2, double sigma2) {
    const auto a = min_norm_asymptotics({rho1, rho2, psi1, gamma}, r2, sigma2);
    return py::make_tuple(a.bias, a.variance);
  }, py::arg("rho1"), py::arg("rho2"), py::arg("psi1"), py::arg("gamma"), py::arg("r2"),
     py::arg("sigma2"));
  m.def("best_variance_asymptotics", [](double rho1, double rho2, double psi1, double gamma,
                                        double r2, double sigma2) {
    return best_variance_asymptotics({rho1, rho2, psi1, gamma}, r2, sigma2);
  }, py::arg("rho1"), py::arg("rho2"), py::arg("psi1"), py::arg("gamma"), py::arg("r2"),
     py::arg("sigma2"));

  m.def("rf_features", [](const Matrix& x, const Matrix& theta, const std::string& activation) {
    return rf_features(x, RFModel{theta, parse_activation(activation)});
  }, py::arg("x"), py::arg("theta"), py::arg("activation") = "relu");

  m.def("builtin_names", &builtin_names);
  m.def("builtin_spec", [](const std::string& name) { return spec_to_json(builtin_spec(name)).dump(); },
        py::arg("name"));
  // Takes and returns JSON / CSV text so the module needs no extra converters.
  m.def("run_experiment", [](const std::string& spec_json, unsigned threads) {
    const auto spec = spec_from_json(nlohmann::json::parse(spec_json));
    std::vector<ResultRow> rows;
    {
      py::gil_scoped_release release;
      rows = run_experiment(spec, {threads});
    }
    return to_csv(rows);
  }, py::arg("spec_json"), py::arg("threads") = 1);
}
