#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "optinterp/experiment.hpp"
#include "optinterp/invariants.hpp"
#include "optinterp/rmt.hpp"

namespace fs = std::filesystem;
using namespace optinterp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

struct GlobalFlags {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> replicates;
  std::optional<long long> scale_n;
  unsigned threads = 0;
};

fs::path output_dir(const GlobalFlags& g) {
  if (!g.out.empty()) return g.out;
  if (const char* env = std::getenv("OPTINTERP_OUT"); env != nullptr && *env != '\0') return env;
  return "results";
}

int run_command(const GlobalFlags& g, const std::string& config, const std::string& builtin,
                bool no_plotdata, bool quiet) {
  if (config.empty() == builtin.empty()) {
    throw ConfigError("run: give exactly one of --config or --builtin");
  }
  ExperimentSpec spec = config.empty() ? builtin_spec(builtin) : load_spec(config);
  if (g.seed) spec.seed = *g.seed;
  if (g.replicates) spec.replicates = *g.replicates;
  if (g.scale_n) {
    if (*g.scale_n < 1) throw ConfigError("--scale-n must be >= 1");
    spec.n = static_cast<Index>(*g.scale_n);
  }
  spec.validate();

  const fs::path dir = output_dir(g);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());

  const auto rows = run_experiment(spec, {g.threads});
  const fs::path csv = dir / (spec.name + ".csv");
  {
    std::ofstream out(csv, std::ios::binary);
    if (!out) throw Error("cannot write " + csv.string());
    write_csv(rows, out);
  }
  if (!quiet) std::cout << "wrote " << csv.string() << " (" << rows.size() << " rows)\n";
  if (!no_plotdata) {
    std::vector<std::pair<std::string, std::string>> series;
    for (const auto& e : spec.estimators) series.emplace_back(spec.name, e);
    for (const auto& r : rows) {
      if (r.replicate == "asymptotic") {
        std::pair<std::string, std::string> k{r.experiment, r.estimator};
        if (std::find(series.begin(), series.end(), k) == series.end()) series.push_back(k);
      }
    }
    const auto files = emit_plotdata(rows, dir / "plotdata", series);
    if (!quiet) std::cout << "wrote " << files.size() << " plot-data series to " << (dir / "plotdata").string() << '\n';
  }
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.error.empty() ? 0 : 1;
  if (failed > 0 && !quiet) std::cerr << failed << " rows carry errors (see the error column)\n";
  return kExitOk;
}

int invariants_command(const GlobalFlags& g, double tolerance_scale) {
  InvariantOptions opts;
  opts.seed = g.seed.value_or(0);
  opts.tolerance_scale = tolerance_scale;
  opts.threads = g.threads;
  const auto results = run_invariant_suite(opts);
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(14) << r.module
              << r.name << "  [" << r.detail << "] " << std::fixed << std::setprecision(2)
              << r.seconds << "s\n";
  }
  const bool ok = all_passed(results);
  std::cout << (ok ? "all checks passed" : "some checks failed") << '\n';
  return ok ? kExitOk : kExitFailure;
}

int rmt_command(double rho1, double rho2, double psi1, double gamma, double r2, double sigma2) {
  const StrongWeakParams p{rho1, rho2, psi1, gamma};
  const double v0 = companion_v0(p);
  const auto mn = min_norm_asymptotics(p, r2, sigma2);
  const auto bv = best_variance_asymptotic_parts(p, r2, sigma2);
  std::cout << "v0 " << format_double(v0) << '\n'
            << "delta " << format_double(delta_term(p, v0)) << '\n'
            << "min_norm bias " << format_double(mn.bias) << " variance "
            << format_double(mn.variance) << " total " << format_double(mn.total()) << '\n'
            << "best_variance bias " << format_double(bv.bias) << " variance "
            << format_double(bv.variance) << " total " << format_double(bv.total()) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interpolating estimators for overparametrized linear regression"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--seed", g.seed, "Seed for all random draws");
  app.add_option("--out", g.out, "Output directory (default $OPTINTERP_OUT or ./results)");
  app.add_option("--replicates", g.replicates, "Replicates per sweep point");
  app.add_option("--scale-n", g.scale_n, "Sample size n (d follows from gamma)");
  app.add_option("--threads", g.threads, "Worker threads, 0 = all cores");

  auto* run = app.add_subcommand("run", "Run an experiment and write CSV and plot data");
  std::string config;
  std::string builtin;
  bool no_plotdata = false;
  bool quiet = false;
  run->add_option("-c,--config", config, "JSON experiment file");
  run->add_option("-b,--builtin", builtin, "Built-in experiment (see `list`)");
  run->add_flag("--no-plotdata", no_plotdata, "Skip plot-data files");
  run->add_flag("-q,--quiet", quiet, "Only report errors");

  auto* inv = app.add_subcommand("invariants", "Run the property-check suite");
  double tolerance_scale = 1.0;
  inv->add_option("--tolerance-scale", tolerance_scale, "Multiply every tolerance");

  auto* list = app.add_subcommand("list", "List built-in experiments");

  auto* show = app.add_subcommand("show", "Print a built-in experiment as JSON");
  std::string show_name;
  show->add_option("name", show_name, "Built-in name")->required();

  auto* rmt = app.add_subcommand("rmt", "Strong-weak asymptotic predictions");
  double rho1 = 1.0, rho2 = 1.0, psi1 = 0.5, gamma = 2.0, r2 = 1.0, sigma2 = 1.0;
  rmt->add_option("--rho1", rho1);
  rmt->add_option("--rho2", rho2);
  rmt->add_option("--psi1", psi1);
  rmt->add_option("--gamma", gamma);
  rmt->add_option("--r2", r2);
  rmt->add_option("--sigma2", sigma2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) return run_command(g, config, builtin, no_plotdata, quiet);
    if (inv->parsed()) return invariants_command(g, tolerance_scale);
    if (list->parsed()) {
      for (const auto& name : builtin_names()) {
        const auto spec = builtin_spec(name);
        std::cout << name << "  " << (spec.sweep ? spec.sweep->parameter : "-") << "  n=" << spec.n
                  << " gamma=" << format_double(spec.gamma) << '\n';
      }
      return kExitOk;
    }
    if (show->parsed()) {
      std::cout << spec_to_json(builtin_spec(show_name)).dump(2) << '\n';
      return kExitOk;
    }
    if (rmt->parsed()) return rmt_command(rho1, rho2, psi1, gamma, r2, sigma2);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidSpec& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidParams& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}
