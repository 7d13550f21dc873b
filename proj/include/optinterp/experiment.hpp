#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "optinterp/covest.hpp"
#include "optinterp/model.hpp"
#include "optinterp/rf.hpp"

namespace optinterp {

enum class ModelKind { Linear, RandomFeatures };

struct SweepSpec {
  /// One of: covariance.rho1, covariance.rho2, covariance.psi1, covariance.rho,
  /// prior.rho, gamma, n, r2, sigma2, rf.width_ratio.
  std::string parameter;
  std::vector<double> values;
};

struct RFSpec {
  /// N = round(width_ratio * d).
  double width_ratio = 2.0;
  Activation activation = Activation::Relu;
  /// Samples for the fitted moments, per unit of width.
  double moment_samples_per_width = 50.0;
  /// Risk is scored against an independent moment estimate this many times larger.
  double eval_samples_multiplier = 4.0;
};

struct EmpiricalRiskSpec {
  /// Average over fresh xi draws with a refit per draw instead of freezing Q.
  bool exact = false;
  std::size_t exact_draws = 20;
};

struct ExperimentSpec {
  std::string name = "experiment";
  ModelKind model = ModelKind::Linear;
  CovarianceSpec covariance = cov::Identity{};
  PriorSpec prior = prior::Identity{};
  Index n = 500;
  double gamma = 2.0;
  double r2 = 1.0;
  double sigma2 = 1.0;
  std::optional<SweepSpec> sweep;
  std::vector<std::string> estimators;
  std::size_t replicates = 20;
  std::uint64_t seed = 0;
  bool rmt_predictions = false;
  bool bias_variance = true;
  EmpiricalConfig empirical;
  EmpiricalRiskSpec empirical_risk;
  RFSpec rf;

  /// floor(gamma * n).
  Index d() const;
  void validate() const;
};

/// Labels accepted in ExperimentSpec::estimators.
const std::vector<std::string>& registered_estimators();

struct ResultRow {
  std::string experiment;
  std::string estimator;
  std::string sweep_param;
  double sweep_value = 0.0;
  Index n = 0;
  Index d = 0;
  double gamma = 0.0;
  /// Replicate index, "mean" or "asymptotic".
  std::string replicate;
  std::optional<double> excess_risk;
  std::optional<double> bias;
  std::optional<double> variance;
  std::optional<double> stderr_;
  std::uint64_t seed = 0;
  std::string error;
};

struct RunOptions {
  unsigned threads = 1;
};

/// Sweep points x replicates; per-replicate rows, one "mean" row per
/// (estimator, point) and, when requested, "<name>_asymptotic" rows.
/// Failures are recorded in the row's error field. Rows are sorted by
/// (estimator, sweep_value, replicate).
std::vector<ResultRow> run_experiment(const ExperimentSpec& spec, const RunOptions& opts = {});

/// Spec with `parameter` set to `value`.
ExperimentSpec apply_sweep_value(ExperimentSpec spec, const std::string& parameter, double value);

/// Shortest representation that parses back to the same double.
std::string format_double(double v);

extern const char* const kCsvHeader;
void write_csv(const std::vector<ResultRow>& rows, std::ostream& out);
std::string to_csv(const std::vector<ResultRow>& rows);

struct PlotPoint {
  double sweep_value = 0.0;
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// Writes one "<experiment>__<estimator>.dat" file per series with columns
/// sweep_value, mean excess risk, stderr taken from the aggregate rows.
/// Series default to every (experiment, estimator) present in rows; listed
/// series without rows produce a header-only file.
std::vector<std::filesystem::path> emit_plotdata(
    const std::vector<ResultRow>& rows, const std::filesystem::path& dir,
    const std::vector<std::pair<std::string, std::string>>& series = {});

std::vector<PlotPoint> read_plotdata(const std::filesystem::path& path);

ExperimentSpec spec_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const ExperimentSpec& spec);
ExperimentSpec load_spec(const std::filesystem::path& path);

/// Names of the built-in experiments, fig1 ... fig7.
std::vector<std::string> builtin_names();
ExperimentSpec builtin_spec(const std::string& name);

}  // namespace optinterp
