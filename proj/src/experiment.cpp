#include "optinterp/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <tuple>

#include "optinterp/interpolators.hpp"
#include "optinterp/parallel.hpp"
#include "optinterp/risk.hpp"
#include "optinterp/rmt.hpp"

namespace optinterp {

namespace {

using nlohmann::json;

const std::vector<std::string> kLinearEstimators = {
    "min_norm", "best_variance", "optimal_bias", "optimal_response_linear",
    "best_possible", "w_Oe", "w_Oe_phi"};
const std::vector<std::string> kRfEstimators = {"rf_min_norm", "rf_optimal"};

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::size_t estimator_index(const std::string& label) {
  const auto& all = registered_estimators();
  return static_cast<std::size_t>(std::find(all.begin(), all.end(), label) - all.begin());
}

double signal_to_noise(double r2, double sigma2) {
  return ProblemConfig{1, 1, r2, sigma2, 0}.snr();
}

// Generator streams: instances use the replicate index, so every sweep point
// and every estimator sees the same draw of (X, w*, xi) for a replicate.
// Estimator-internal randomness gets its own stream per (replicate, estimator).
constexpr std::uint64_t kEstimatorStreamBase = std::uint64_t{1} << 40;

std::uint64_t estimator_stream(std::size_t replicate, const std::string& label) {
  return kEstimatorStreamBase + replicate * 64 + estimator_index(label);
}

struct ReplicateOutcome {
  std::optional<double> excess_risk;
  std::optional<double> bias;
  std::optional<double> variance;
  std::string error;
};

ReplicateOutcome from_risk(const ReplicateRisk& r) { return {r.excess_risk, r.bias, r.variance, {}}; }

// Fits and scores the linear-model estimators for one instance.
class LinearReplicate {
 public:
  LinearReplicate(const ExperimentSpec& spec, const ProblemInstance& inst, std::size_t replicate)
      : spec_(spec), inst_(inst), replicate_(replicate) {}

  ReplicateOutcome run(const std::string& label) {
    const Matrix& x = inst_.x;
    const bool bv = spec_.bias_variance;
    if (label == "best_possible") {
      const double v = expected_excess_risk_best_possible(x, inst_.sigma, inst_.config.sigma2);
      ReplicateOutcome out{v, {}, {}, {}};
      if (bv) {
        out.bias = 0.0;
        out.variance = v;
      }
      return out;
    }
    if (label == "w_Oe" || label == "w_Oe_phi") return empirical(label);
    return from_risk(evaluate(FittedEstimator::linear(linear(label), inst_.y), inst_, bv));
  }

 private:
  LinearEstimator linear(const std::string& label) {
    const Matrix& x = inst_.x;
    if (label == "min_norm") return min_norm(x);
    if (label == "best_variance") return best_variance(x, inst_.sigma);
    if (label == "optimal_bias") return optimal_bias(x, inst_.phi);
    if (label == "optimal_response_linear") {
      const double delta = signal_to_noise(inst_.config.r2, inst_.config.sigma2);
      return optimal_response_linear(x, inst_.sigma, inst_.phi, delta);
    }
    throw InvalidSpec("estimator '" + label + "' is not a linear-model estimator");
  }

  const SpdMatrix& sigma_e() {
    if (!sigma_e_) {
      const auto& cfg = spec_.empirical;
      switch (cfg.method) {
        case CovarianceMethod::GraphicalLasso:
          sigma_e_ = std::make_unique<SpdMatrix>(graphical_lasso(inst_.x, cfg.glasso));
          break;
        case CovarianceMethod::LedoitWolf:
          sigma_e_ = std::make_unique<SpdMatrix>(ledoit_wolf(inst_.x));
          break;
        case CovarianceMethod::Ridge:
          sigma_e_ = std::make_unique<SpdMatrix>(ridge_empirical(inst_.x, cfg.ridge_lambda));
          break;
        case CovarianceMethod::Oracle:
          sigma_e_ = std::make_unique<SpdMatrix>(inst_.sigma);
          break;
      }
    }
    return *sigma_e_;
  }

  CovarianceEstimator refit() const {
    const EmpiricalConfig cfg = spec_.empirical;
    const SpdMatrix sigma = inst_.sigma;
    return [cfg, sigma](const Matrix& m) -> SpdMatrix {
      switch (cfg.method) {
        case CovarianceMethod::GraphicalLasso:
          return graphical_lasso(m, cfg.glasso);
        case CovarianceMethod::LedoitWolf:
          return ledoit_wolf(m);
        case CovarianceMethod::Ridge:
          return ridge_empirical(m, cfg.ridge_lambda);
        case CovarianceMethod::Oracle:
          break;
      }
      return sigma;
    };
  }

  LinearEstimator fit_empirical_q(const std::string& label, const Vector& y, Rng& rng) {
    const SpdMatrix& se = sigma_e();
    const bool with_phi = label == "w_Oe_phi";
    const SpdMatrix phi_hat = with_phi ? inst_.phi : SpdMatrix::identity(inst_.x.cols());
    const CvResult cv = cross_validate_delta(inst_.x, y, se, phi_hat, spec_.empirical.cv, rng,
                                             refit());
    return with_phi ? w_Oe_phi(inst_.x, se, cv.delta, phi_hat) : w_Oe(inst_.x, se, cv.delta);
  }

  ReplicateOutcome empirical(const std::string& label) {
    Rng rng = make_rng(spec_.seed, estimator_stream(replicate_, label));
    if (!spec_.empirical_risk.exact) {
      LinearEstimator e = fit_empirical_q(label, inst_.y, rng);
      return from_risk(evaluate(FittedEstimator::linear(std::move(e), inst_.y), inst_,
                                spec_.bias_variance));
    }
    // Sigma_e depends on X only, so it stays fixed while xi is redrawn and
    // delta_e is re-selected for every draw.
    const double noise = std::sqrt(inst_.config.sigma2);
    const Vector signal = inst_.x * inst_.w_star;
    std::vector<double> risks;
    for (std::size_t k = 0; k < spec_.empirical_risk.exact_draws; ++k) {
      const Vector y = signal + noise * standard_normal(inst_.x.rows(), 1, rng);
      const LinearEstimator e = fit_empirical_q(label, y, rng);
      risks.push_back(excess_risk(apply(e, y), inst_.w_star, inst_.sigma));
    }
    return {mean_stderr(risks).mean, {}, {}, {}};
  }

  const ExperimentSpec& spec_;
  const ProblemInstance& inst_;
  std::size_t replicate_;
  std::unique_ptr<SpdMatrix> sigma_e_;
};

Index rf_width(const ExperimentSpec& spec, Index d) {
  return std::max<Index>(1, static_cast<Index>(std::llround(spec.rf.width_ratio * static_cast<double>(d))));
}

std::vector<ReplicateOutcome> run_rf_replicate(const ExperimentSpec& spec, const ProblemConfig& cfg,
                                               const SpdMatrix& phi, std::size_t replicate) {
  Rng rng = make_rng(spec.seed, replicate);
  const ProblemInstance inst = sample_sphere_instance(cfg, phi, rng);
  const Index width = rf_width(spec, cfg.d);
  const RFModel model = make_rf_model(width, cfg.d, spec.rf.activation, rng);
  const auto fit_samples = std::max<std::size_t>(
      static_cast<std::size_t>(width),
      static_cast<std::size_t>(std::llround(spec.rf.moment_samples_per_width * static_cast<double>(width))));
  const auto eval_samples = static_cast<std::size_t>(
      std::llround(spec.rf.eval_samples_multiplier * static_cast<double>(fit_samples)));
  const RFSecondMoments fit_moments = estimate_second_moments(model, fit_samples, rng);
  const RFSecondMoments eval_moments = estimate_second_moments(model, eval_samples, rng);
  const Matrix z = rf_features(inst.x, model);

  std::vector<ReplicateOutcome> out;
  for (const auto& label : spec.estimators) {
    try {
      LinearEstimator e = label == "rf_min_norm"
                              ? rf_min_norm(z)
                              : rf_optimal(inst.x, z, fit_moments, phi,
                                           signal_to_noise(cfg.r2, cfg.sigma2));
      ReplicateOutcome r;
      r.excess_risk = rf_conditional_expected_risk(e.q, inst.x, inst.w_star, eval_moments,
                                                   inst.sigma, cfg.sigma2);
      if (spec.bias_variance) {
        const auto bv =
            rf_bias_variance(e.q, inst.x, eval_moments, inst.sigma, phi, cfg.r2, cfg.sigma2);
        r.bias = bv.bias;
        r.variance = bv.variance;
      }
      out.push_back(std::move(r));
    } catch (const Error& err) {
      out.push_back({{}, {}, {}, err.what()});
    }
  }
  return out;
}

struct Point {
  ExperimentSpec spec;
  double value = 0.0;
  std::unique_ptr<GaussianDesign> design;
  std::unique_ptr<SpdMatrix> rf_phi;
  std::string error;
};

ProblemConfig point_config(const ExperimentSpec& s) {
  ProblemConfig cfg;
  cfg.n = s.n;
  cfg.d = s.d();
  cfg.r2 = s.r2;
  cfg.sigma2 = s.sigma2;
  cfg.seed = s.seed;
  return cfg;
}

// numeric replicates first, then "mean", then "asymptotic"
std::tuple<int, long long, std::string> replicate_key(const std::string& r) {
  long long idx = 0;
  const auto [ptr, ec] = std::from_chars(r.data(), r.data() + r.size(), idx);
  if (ec == std::errc() && ptr == r.data() + r.size()) return {0, idx, {}};
  return {r == "mean" ? 1 : 2, 0, r};
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' || c == '\r' ? ' ' : c;
  }
  out += '"';
  return out;
}

std::string opt_field(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

// -- JSON helpers --------------------------------------------------------

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

Matrix matrix_from_json(const json& j, const char* where) {
  if (!j.is_array() || j.empty()) throw ConfigError(std::string(where) + ": matrix must be a non-empty array");
  const auto rows = static_cast<Index>(j.size());
  Matrix m(rows, rows);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != rows) {
      throw ConfigError(std::string(where) + ": matrix must be square");
    }
    for (Index k = 0; k < rows; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

CovarianceSpec covariance_from_json(const json& j) {
  const std::string type = get_or<std::string>(j, "type", "");
  if (type == "identity") {
    reject_unknown(j, {"type"}, "covariance");
    return cov::Identity{};
  }
  if (type == "strong_weak") {
    reject_unknown(j, {"type", "rho1", "rho2", "psi1"}, "covariance");
    cov::StrongWeak s;
    s.rho1 = get_or(j, "rho1", s.rho1);
    s.rho2 = get_or(j, "rho2", s.rho2);
    s.psi1 = get_or(j, "psi1", s.psi1);
    return s;
  }
  if (type == "autoregressive") {
    reject_unknown(j, {"type", "rho"}, "covariance");
    return cov::Autoregressive{get_or(j, "rho", 0.5)};
  }
  if (type == "exponential") {
    reject_unknown(j, {"type"}, "covariance");
    return cov::Exponential{};
  }
  if (type == "custom") {
    reject_unknown(j, {"type", "matrix"}, "covariance");
    if (!j.contains("matrix")) throw ConfigError("covariance: custom needs 'matrix'");
    return cov::Custom{matrix_from_json(j.at("matrix"), "covariance")};
  }
  throw ConfigError("covariance: unknown type '" + type + "'");
}

json covariance_to_json(const CovarianceSpec& spec) {
  if (std::holds_alternative<cov::Identity>(spec)) return {{"type", "identity"}};
  if (const auto* s = std::get_if<cov::StrongWeak>(&spec)) {
    return {{"type", "strong_weak"}, {"rho1", s->rho1}, {"rho2", s->rho2}, {"psi1", s->psi1}};
  }
  if (const auto* s = std::get_if<cov::Autoregressive>(&spec)) {
    return {{"type", "autoregressive"}, {"rho", s->rho}};
  }
  if (std::holds_alternative<cov::Exponential>(spec)) return {{"type", "exponential"}};
  return {{"type", "custom"}, {"matrix", matrix_to_json(std::get<cov::Custom>(spec).matrix)}};
}

PriorSpec prior_from_json(const json& j) {
  const std::string type = get_or<std::string>(j, "type", "");
  if (type == "identity") {
    reject_unknown(j, {"type"}, "prior");
    return prior::Identity{};
  }
  if (type == "autoregressive") {
    reject_unknown(j, {"type", "rho"}, "prior");
    return prior::Autoregressive{get_or(j, "rho", 0.5)};
  }
  if (type == "inverse_covariance") {
    reject_unknown(j, {"type"}, "prior");
    return prior::InverseOfCovariance{};
  }
  if (type == "custom") {
    reject_unknown(j, {"type", "matrix"}, "prior");
    if (!j.contains("matrix")) throw ConfigError("prior: custom needs 'matrix'");
    return prior::Custom{matrix_from_json(j.at("matrix"), "prior")};
  }
  throw ConfigError("prior: unknown type '" + type + "'");
}

json prior_to_json(const PriorSpec& spec) {
  if (std::holds_alternative<prior::Identity>(spec)) return {{"type", "identity"}};
  if (const auto* s = std::get_if<prior::Autoregressive>(&spec)) {
    return {{"type", "autoregressive"}, {"rho", s->rho}};
  }
  if (std::holds_alternative<prior::InverseOfCovariance>(spec)) {
    return {{"type", "inverse_covariance"}};
  }
  return {{"type", "custom"}, {"matrix", matrix_to_json(std::get<prior::Custom>(spec).matrix)}};
}

const std::map<std::string, CovarianceMethod> kMethods = {
    {"graphical_lasso", CovarianceMethod::GraphicalLasso},
    {"ledoit_wolf", CovarianceMethod::LedoitWolf},
    {"ridge", CovarianceMethod::Ridge},
    {"oracle", CovarianceMethod::Oracle}};

std::string method_name(CovarianceMethod m) {
  for (const auto& [name, value] : kMethods) {
    if (value == m) return name;
  }
  return "graphical_lasso";
}

}  // namespace

const std::vector<std::string>& registered_estimators() {
  static const std::vector<std::string> all = [] {
    std::vector<std::string> v = kLinearEstimators;
    v.insert(v.end(), kRfEstimators.begin(), kRfEstimators.end());
    return v;
  }();
  return all;
}

Index ExperimentSpec::d() const {
  return static_cast<Index>(std::floor(gamma * static_cast<double>(n) + 1e-9));
}

void ExperimentSpec::validate() const {
  if (name.empty()) throw InvalidSpec("experiment: name is empty");
  if (name.find_first_of("/\\") != std::string::npos) {
    throw InvalidSpec("experiment: name must not contain path separators");
  }
  if (n < 1) throw InvalidSpec("experiment: n must be >= 1");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidSpec("experiment: gamma must be > 0");
  if (d() < 1) throw InvalidSpec("experiment: floor(gamma n) must be >= 1");
  if (!(r2 >= 0.0) || !std::isfinite(r2)) throw InvalidSpec("experiment: r2 must be >= 0");
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) {
    throw InvalidSpec("experiment: sigma2 must be >= 0");
  }
  if (replicates < 1) throw InvalidSpec("experiment: replicates must be >= 1");
  if (estimators.empty()) throw InvalidSpec("experiment: no estimators listed");
  const auto& allowed = model == ModelKind::Linear ? kLinearEstimators : kRfEstimators;
  for (const auto& e : estimators) {
    if (!contains(registered_estimators(), e)) {
      throw InvalidSpec("experiment: unknown estimator '" + e + "'");
    }
    if (!contains(allowed, e)) {
      throw InvalidSpec("experiment: estimator '" + e + "' does not apply to this model");
    }
  }
  if (sweep) {
    if (sweep->values.empty()) throw InvalidSpec("experiment: sweep has no values");
    for (double v : sweep->values) {
      if (!std::isfinite(v)) throw InvalidSpec("experiment: sweep values must be finite");
    }
  }
  if (model == ModelKind::Linear) {
    if (d() < n) throw InvalidSpec("experiment: linear model needs d = floor(gamma n) >= n");
  } else {
    if (!std::holds_alternative<cov::Identity>(covariance)) {
      throw InvalidSpec("experiment: random features use sphere-uniform inputs (identity covariance)");
    }
    if (!(rf.width_ratio > 0.0)) throw InvalidSpec("experiment: rf.width_ratio must be > 0");
    if (!(rf.moment_samples_per_width >= 1.0) || !(rf.eval_samples_multiplier >= 1.0)) {
      throw InvalidSpec("experiment: rf sample factors must be >= 1");
    }
    if (contains(estimators, "rf_optimal") && !(r2 > 0.0 && sigma2 > 0.0)) {
      throw InvalidSpec("experiment: rf_optimal needs r2 > 0 and sigma2 > 0");
    }
  }
  empirical.cv.validate();
  if (empirical_risk.exact && empirical_risk.exact_draws < 1) {
    throw InvalidSpec("experiment: exact_draws must be >= 1");
  }
}

ExperimentSpec apply_sweep_value(ExperimentSpec spec, const std::string& parameter, double value) {
  auto strong_weak = [&]() -> cov::StrongWeak& {
    auto* s = std::get_if<cov::StrongWeak>(&spec.covariance);
    if (s == nullptr) throw InvalidSpec("sweep '" + parameter + "' needs a strong_weak covariance");
    return *s;
  };
  if (parameter == "covariance.rho1") {
    strong_weak().rho1 = value;
  } else if (parameter == "covariance.rho2") {
    strong_weak().rho2 = value;
  } else if (parameter == "covariance.psi1") {
    strong_weak().psi1 = value;
  } else if (parameter == "covariance.rho") {
    auto* s = std::get_if<cov::Autoregressive>(&spec.covariance);
    if (s == nullptr) throw InvalidSpec("sweep 'covariance.rho' needs an autoregressive covariance");
    s->rho = value;
  } else if (parameter == "prior.rho") {
    auto* s = std::get_if<prior::Autoregressive>(&spec.prior);
    if (s == nullptr) throw InvalidSpec("sweep 'prior.rho' needs an autoregressive prior");
    s->rho = value;
  } else if (parameter == "gamma") {
    spec.gamma = value;
  } else if (parameter == "n") {
    if (!(value >= 1.0)) throw InvalidSpec("sweep 'n' values must be >= 1");
    spec.n = static_cast<Index>(std::llround(value));
  } else if (parameter == "r2") {
    spec.r2 = value;
  } else if (parameter == "sigma2") {
    spec.sigma2 = value;
  } else if (parameter == "rf.width_ratio") {
    spec.rf.width_ratio = value;
  } else {
    throw InvalidSpec("unknown sweep parameter '" + parameter + "'");
  }
  return spec;
}

std::vector<ResultRow> run_experiment(const ExperimentSpec& spec, const RunOptions& opts) {
  spec.validate();
  const std::string param = spec.sweep ? spec.sweep->parameter : "";
  const std::vector<double> values = spec.sweep ? spec.sweep->values : std::vector<double>{0.0};

  std::vector<Point> points(values.size());
  for (std::size_t p = 0; p < values.size(); ++p) {
    Point& pt = points[p];
    pt.value = values[p];
    pt.spec = spec.sweep ? apply_sweep_value(spec, param, values[p]) : spec;
    pt.spec.sweep.reset();
    pt.spec.validate();
  }
  // Building Sigma^{1/2} can be expensive; do it once per point, in parallel.
  parallel_for(points.size(), opts.threads, [&](std::size_t p) {
    Point& pt = points[p];
    try {
      const Index d = pt.spec.d();
      if (pt.spec.model == ModelKind::Linear) {
        SpdMatrix sigma = build_covariance(pt.spec.covariance, d);
        SpdMatrix phi = build_prior(pt.spec.prior, sigma, d);
        pt.design = std::make_unique<GaussianDesign>(std::move(sigma), std::move(phi));
      } else {
        pt.rf_phi = std::make_unique<SpdMatrix>(
            build_prior(pt.spec.prior, SpdMatrix::identity(d), d));
      }
    } catch (const Error& e) {
      pt.error = e.what();
    }
  });

  const std::size_t reps = spec.replicates;
  const std::size_t n_est = spec.estimators.size();
  std::vector<std::vector<ReplicateOutcome>> outcomes(points.size() * reps);
  parallel_for(outcomes.size(), opts.threads, [&](std::size_t task) {
    const std::size_t p = task / reps;
    const std::size_t r = task % reps;
    const Point& pt = points[p];
    auto& slot = outcomes[task];
    auto fail_all = [&](const std::string& msg) {
      slot.assign(n_est, ReplicateOutcome{{}, {}, {}, msg});
    };
    if (!pt.error.empty()) return fail_all(pt.error);
    const ProblemConfig cfg = point_config(pt.spec);
    if (pt.spec.model == ModelKind::RandomFeatures) {
      try {
        slot = run_rf_replicate(pt.spec, cfg, *pt.rf_phi, r);
      } catch (const Error& e) {
        fail_all(e.what());
      }
      return;
    }
    std::optional<ProblemInstance> inst;
    try {
      Rng rng = make_rng(spec.seed, r);
      inst = pt.design->sample(cfg, rng);
    } catch (const Error& e) {
      return fail_all(e.what());
    }
    LinearReplicate runner(pt.spec, *inst, r);
    for (const auto& label : spec.estimators) {
      try {
        slot.push_back(runner.run(label));
      } catch (const Error& e) {
        slot.push_back({{}, {}, {}, e.what()});
      }
    }
  });

  std::vector<ResultRow> rows;
  for (std::size_t p = 0; p < points.size(); ++p) {
    const Point& pt = points[p];
    ResultRow base;
    base.experiment = spec.name;
    base.sweep_param = param;
    base.sweep_value = pt.value;
    base.n = pt.spec.n;
    base.d = pt.spec.d();
    base.gamma = pt.spec.gamma;
    base.seed = spec.seed;

    for (std::size_t e = 0; e < n_est; ++e) {
      base.estimator = spec.estimators[e];
      std::vector<double> risks;
      std::vector<double> biases;
      std::vector<double> variances;
      std::string first_error;
      for (std::size_t r = 0; r < reps; ++r) {
        const ReplicateOutcome& o = outcomes[p * reps + r][e];
        ResultRow row = base;
        row.replicate = std::to_string(r);
        row.excess_risk = o.excess_risk;
        row.bias = o.bias;
        row.variance = o.variance;
        row.error = o.error;
        rows.push_back(row);
        if (!o.excess_risk) {
          if (first_error.empty()) first_error = o.error;
          continue;
        }
        risks.push_back(*o.excess_risk);
        if (o.bias) biases.push_back(*o.bias);
        if (o.variance) variances.push_back(*o.variance);
      }
      ResultRow mean = base;
      mean.replicate = "mean";
      if (risks.empty()) {
        mean.error = "all replicates failed: " + first_error;
      } else {
        const auto ms = mean_stderr(risks);
        mean.excess_risk = ms.mean;
        mean.stderr_ = ms.stderr_;
        if (biases.size() == risks.size()) mean.bias = mean_stderr(biases).mean;
        if (variances.size() == risks.size()) mean.variance = mean_stderr(variances).mean;
        if (risks.size() < reps) {
          mean.error = std::to_string(reps - risks.size()) + " replicates failed: " + first_error;
        }
      }
      rows.push_back(mean);
    }

    const auto* sw = std::get_if<cov::StrongWeak>(&pt.spec.covariance);
    const bool isotropic_prior = std::holds_alternative<prior::Identity>(pt.spec.prior);
    if (spec.rmt_predictions && spec.model == ModelKind::Linear && sw != nullptr &&
        isotropic_prior) {
      const StrongWeakParams sp{sw->rho1, sw->rho2, sw->psi1, pt.spec.gamma};
      for (const auto& label : spec.estimators) {
        if (label != "min_norm" && label != "best_variance") continue;
        ResultRow row = base;
        row.estimator = label + "_asymptotic";
        row.replicate = "asymptotic";
        try {
          const AsymptoticRisk a = label == "min_norm"
                                       ? min_norm_asymptotics(sp, pt.spec.r2, pt.spec.sigma2)
                                       : best_variance_asymptotic_parts(sp, pt.spec.r2, pt.spec.sigma2);
          row.excess_risk = a.total();
          row.bias = a.bias;
          row.variance = a.variance;
          row.stderr_ = 0.0;
        } catch (const Error& e) {
          row.error = e.what();
        }
        rows.push_back(row);
      }
    }
  }

  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.experiment, a.estimator, a.sweep_value) <
               std::tie(b.experiment, b.estimator, b.sweep_value) ||
           (std::tie(a.experiment, a.estimator, a.sweep_value) ==
                std::tie(b.experiment, b.estimator, b.sweep_value) &&
            replicate_key(a.replicate) < replicate_key(b.replicate));
  });
  return rows;
}

std::string format_double(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

const char* const kCsvHeader =
    "experiment,estimator,sweep_param,sweep_value,n,d,gamma,replicate,excess_risk,bias,variance,"
    "stderr,seed,error";

void write_csv(const std::vector<ResultRow>& rows, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << csv_field(r.experiment) << ',' << csv_field(r.estimator) << ','
        << csv_field(r.sweep_param) << ',' << format_double(r.sweep_value) << ',' << r.n << ','
        << r.d << ',' << format_double(r.gamma) << ',' << csv_field(r.replicate) << ','
        << opt_field(r.excess_risk) << ',' << opt_field(r.bias) << ',' << opt_field(r.variance)
        << ',' << opt_field(r.stderr_) << ',' << r.seed << ',' << csv_field(r.error) << '\n';
  }
}

std::string to_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  write_csv(rows, out);
  return out.str();
}

std::vector<std::filesystem::path> emit_plotdata(
    const std::vector<ResultRow>& rows, const std::filesystem::path& dir,
    const std::vector<std::pair<std::string, std::string>>& series) {
  std::vector<std::pair<std::string, std::string>> keys = series;
  if (keys.empty()) {
    for (const auto& r : rows) {
      std::pair<std::string, std::string> k{r.experiment, r.estimator};
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("emit_plotdata: cannot create " + dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> written;
  for (const auto& [experiment, estimator] : keys) {
    std::vector<PlotPoint> pts;
    for (const auto& r : rows) {
      if (r.experiment != experiment || r.estimator != estimator) continue;
      if (r.replicate != "mean" && r.replicate != "asymptotic") continue;
      if (!r.excess_risk) continue;
      pts.push_back({r.sweep_value, *r.excess_risk, r.stderr_.value_or(0.0)});
    }
    std::stable_sort(pts.begin(), pts.end(), [](const PlotPoint& a, const PlotPoint& b) {
      return a.sweep_value < b.sweep_value;
    });
    const auto path = dir / (experiment + "__" + estimator + ".dat");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("emit_plotdata: cannot open " + path.string());
    out << "# sweep_value mean_excess_risk stderr\n";
    for (const auto& p : pts) {
      out << format_double(p.sweep_value) << ' ' << format_double(p.mean) << ' '
          << format_double(p.stderr_) << '\n';
    }
    if (!out) throw Error("emit_plotdata: write failed for " + path.string());
    written.push_back(path);
  }
  return written;
}

std::vector<PlotPoint> read_plotdata(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("read_plotdata: cannot open " + path.string());
  std::vector<PlotPoint> pts;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    fields.imbue(std::locale::classic());
    PlotPoint p;
    if (!(fields >> p.sweep_value >> p.mean >> p.stderr_)) {
      throw Error("read_plotdata: malformed line in " + path.string() + ": " + line);
    }
    pts.push_back(p);
  }
  return pts;
}

ExperimentSpec spec_from_json(const json& j) {
  reject_unknown(j,
                 {"name", "model", "covariance", "prior", "n", "gamma", "r2", "sigma2", "sweep",
                  "estimators", "replicates", "seed", "rmt_predictions", "bias_variance",
                  "empirical", "rf"},
                 "experiment");
  ExperimentSpec s;
  s.name = get_or<std::string>(j, "name", s.name);
  const std::string model = get_or<std::string>(j, "model", "linear");
  if (model == "linear") {
    s.model = ModelKind::Linear;
  } else if (model == "rf") {
    s.model = ModelKind::RandomFeatures;
  } else {
    throw ConfigError("experiment: model must be 'linear' or 'rf'");
  }
  if (j.contains("covariance")) s.covariance = covariance_from_json(j.at("covariance"));
  if (j.contains("prior")) s.prior = prior_from_json(j.at("prior"));
  s.n = get_or<Index>(j, "n", s.n);
  s.gamma = get_or(j, "gamma", s.gamma);
  s.r2 = get_or(j, "r2", s.r2);
  s.sigma2 = get_or(j, "sigma2", s.sigma2);
  if (j.contains("sweep")) {
    const json& sw = j.at("sweep");
    reject_unknown(sw, {"parameter", "values"}, "sweep");
    s.sweep = SweepSpec{get_or<std::string>(sw, "parameter", ""),
                        get_or<std::vector<double>>(sw, "values", {})};
  }
  s.estimators = get_or<std::vector<std::string>>(j, "estimators", {});
  s.replicates = get_or<std::size_t>(j, "replicates", s.replicates);
  s.seed = get_or<std::uint64_t>(j, "seed", s.seed);
  s.rmt_predictions = get_or(j, "rmt_predictions", s.rmt_predictions);
  s.bias_variance = get_or(j, "bias_variance", s.bias_variance);
  if (j.contains("empirical")) {
    const json& e = j.at("empirical");
    reject_unknown(e,
                   {"covariance", "alpha", "max_sweeps", "dual_gap_tol", "penalize_diagonal",
                    "no_center", "ridge_lambda", "grid", "holdout_fraction", "repeats",
                    "refit_per_fold", "exact_risk", "exact_draws"},
                   "empirical");
    auto& c = s.empirical;
    const std::string method = get_or<std::string>(e, "covariance", "graphical_lasso");
    const auto it = kMethods.find(method);
    if (it == kMethods.end()) throw ConfigError("empirical: unknown covariance '" + method + "'");
    c.method = it->second;
    c.glasso.alpha = get_or(e, "alpha", c.glasso.alpha);
    c.glasso.max_sweeps = get_or(e, "max_sweeps", c.glasso.max_sweeps);
    c.glasso.dual_gap_tol = get_or(e, "dual_gap_tol", c.glasso.dual_gap_tol);
    c.glasso.penalize_diagonal = get_or(e, "penalize_diagonal", c.glasso.penalize_diagonal);
    c.glasso.no_center = get_or(e, "no_center", c.glasso.no_center);
    c.ridge_lambda = get_or(e, "ridge_lambda", c.ridge_lambda);
    c.cv.grid = get_or(e, "grid", c.cv.grid);
    c.cv.holdout_fraction = get_or(e, "holdout_fraction", c.cv.holdout_fraction);
    c.cv.repeats = get_or(e, "repeats", c.cv.repeats);
    c.cv.refit_per_fold = get_or(e, "refit_per_fold", c.cv.refit_per_fold);
    s.empirical_risk.exact = get_or(e, "exact_risk", s.empirical_risk.exact);
    s.empirical_risk.exact_draws = get_or(e, "exact_draws", s.empirical_risk.exact_draws);
  }
  if (j.contains("rf")) {
    const json& r = j.at("rf");
    reject_unknown(r, {"width_ratio", "activation", "moment_samples_per_width",
                       "eval_samples_multiplier"},
                   "rf");
    s.rf.width_ratio = get_or(r, "width_ratio", s.rf.width_ratio);
    s.rf.activation = parse_activation(get_or<std::string>(r, "activation", "relu"));
    s.rf.moment_samples_per_width =
        get_or(r, "moment_samples_per_width", s.rf.moment_samples_per_width);
    s.rf.eval_samples_multiplier = get_or(r, "eval_samples_multiplier", s.rf.eval_samples_multiplier);
  }
  s.validate();
  return s;
}

json spec_to_json(const ExperimentSpec& s) {
  json j;
  j["name"] = s.name;
  j["model"] = s.model == ModelKind::Linear ? "linear" : "rf";
  j["covariance"] = covariance_to_json(s.covariance);
  j["prior"] = prior_to_json(s.prior);
  j["n"] = s.n;
  j["gamma"] = s.gamma;
  j["r2"] = s.r2;
  j["sigma2"] = s.sigma2;
  if (s.sweep) j["sweep"] = {{"parameter", s.sweep->parameter}, {"values", s.sweep->values}};
  j["estimators"] = s.estimators;
  j["replicates"] = s.replicates;
  j["seed"] = s.seed;
  j["rmt_predictions"] = s.rmt_predictions;
  j["bias_variance"] = s.bias_variance;
  const auto& c = s.empirical;
  j["empirical"] = {{"covariance", method_name(c.method)},
                    {"alpha", c.glasso.alpha},
                    {"max_sweeps", c.glasso.max_sweeps},
                    {"dual_gap_tol", c.glasso.dual_gap_tol},
                    {"penalize_diagonal", c.glasso.penalize_diagonal},
                    {"no_center", c.glasso.no_center},
                    {"ridge_lambda", c.ridge_lambda},
                    {"grid", c.cv.grid},
                    {"holdout_fraction", c.cv.holdout_fraction},
                    {"repeats", c.cv.repeats},
                    {"refit_per_fold", c.cv.refit_per_fold},
                    {"exact_risk", s.empirical_risk.exact},
                    {"exact_draws", s.empirical_risk.exact_draws}};
  if (s.model == ModelKind::RandomFeatures) {
    j["rf"] = {{"width_ratio", s.rf.width_ratio},
               {"activation", std::string(to_string(s.rf.activation))},
               {"moment_samples_per_width", s.rf.moment_samples_per_width},
               {"eval_samples_multiplier", s.rf.eval_samples_multiplier}};
  }
  return j;
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return spec_from_json(j);
}

std::vector<std::string> builtin_names() {
  return {"fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7"};
}

ExperimentSpec builtin_spec(const std::string& name) {
  ExperimentSpec s;
  s.name = name;
  s.n = 500;
  s.r2 = 1.0;
  s.sigma2 = 1.0;
  s.replicates = 20;
  const std::vector<std::string> strong_weak_set = {"min_norm", "best_variance",
                                                    "optimal_response_linear", "w_Oe",
                                                    "best_possible"};
  const SweepSpec gamma_sweep{"gamma", {1.5, 2.0, 3.0}};
  if (name == "fig1") {
    s.covariance = cov::StrongWeak{1.0, 1.0, 0.5};
    s.gamma = 2.0;
    s.sweep = SweepSpec{"covariance.rho2", {1.0, 0.1, 0.01, 0.001}};
    s.estimators = strong_weak_set;
    s.rmt_predictions = true;
  } else if (name == "fig2") {
    s.covariance = cov::StrongWeak{1.0, 1.0, 0.5};
    s.gamma = 2.0;
    s.sweep = SweepSpec{"covariance.rho1", {1.0, 10.0, 100.0}};
    s.estimators = strong_weak_set;
    s.rmt_predictions = true;
  } else if (name == "fig3") {
    s.covariance = cov::Autoregressive{0.5};
    s.sweep = gamma_sweep;
    s.estimators = {"optimal_response_linear", "w_Oe", "best_possible"};
    s.replicates = 10;
  } else if (name == "fig4") {
    s.covariance = cov::Exponential{};
    s.sweep = gamma_sweep;
    s.estimators = {"optimal_response_linear", "w_Oe", "best_possible"};
    s.replicates = 10;
  } else if (name == "fig5") {
    s.covariance = cov::Exponential{};
    s.prior = prior::Autoregressive{0.5};
    s.sweep = gamma_sweep;
    s.estimators = {"optimal_response_linear", "w_Oe", "w_Oe_phi", "best_possible"};
    s.replicates = 10;
  } else if (name == "fig6") {
    s.covariance = cov::Autoregressive{0.5};
    s.prior = prior::InverseOfCovariance{};
    s.sweep = gamma_sweep;
    s.estimators = {"optimal_response_linear", "w_Oe", "w_Oe_phi", "best_possible"};
    s.replicates = 10;
  } else if (name == "fig7") {
    s.model = ModelKind::RandomFeatures;
    s.r2 = 5.0;
    s.sigma2 = 1.0;
    s.gamma = 1.0 / 3.0;
    s.sweep = SweepSpec{"rf.width_ratio", {4.0, 6.0, 8.0}};
    s.estimators = {"rf_min_norm", "rf_optimal"};
    s.replicates = 10;
  } else {
    throw ConfigError("unknown built-in experiment '" + name + "'");
  }
  s.validate();
  return s;
}

}  // namespace optinterp
