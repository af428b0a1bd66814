// Command-line front end: simulate, estimate, report.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "wtdl/experiment.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

void write_json(const nlohmann::json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(path);
  if (!f) throw wtdl::IoError("cannot open '" + path + "' for writing");
  f << j.dump(2) << '\n';
  if (!f.flush()) throw wtdl::IoError("write to '" + path + "' failed");
}

struct SimulateArgs {
  std::string config;
  std::string preset;
  std::optional<int> reps;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallelism;
  std::string out;
};

int simulate(const SimulateArgs& a) {
  wtdl::StudyConfig config;
  if (!a.config.empty()) {
    config = wtdl::read_study_config(a.config);
  } else if (a.preset == "desk") {
    config = wtdl::desk_preset();
  } else {
    std::cerr << "simulate: give --config or --preset desk\n";
    return kUsage;
  }
  if (a.reps) config.replications = *a.reps;
  if (a.seed) config.master_seed = *a.seed;
  if (a.parallelism) config.parallelism = *a.parallelism;
  wtdl::validate(config);
  const auto report = wtdl::run_study(config);
  wtdl::write_report(report, a.out);
  int failed = 0;
  for (const auto& r : report.records) failed += r.ok ? 0 : 1;
  std::cerr << "simulate: " << config.replications << " replications, " << failed
            << " failed estimator runs; wrote " << a.out << '\n';
  return kOk;
}

struct EstimateArgs {
  std::string data;
  int m = 2;
  std::string lambda = "theory";
  std::string weights = "constant";
  double alpha = 0.05;
  std::uint64_t seed = 0;
  std::optional<double> ridge_outcome;
  std::optional<double> ridge_propensity;
  std::string out;
};

int estimate(const EstimateArgs& a) {
  wtdl::EstimateOptions o;
  o.m = a.m;
  o.lambda_method = wtdl::parse_lambda_method(a.lambda);
  o.weight_mode = wtdl::parse_weight_mode(a.weights);
  o.alpha = a.alpha;
  o.seed = a.seed;
  o.ridge_outcome = a.ridge_outcome;
  o.ridge_propensity = a.ridge_propensity;
  const auto est = wtdl::estimate_from_csv(a.data, o);
  write_json(est, a.out);
  return kOk;
}

int report(const std::string& records, const std::string& out) {
  write_json(wtdl::recompute_summary(records), out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weighted debiased Lasso for sparse linear CATE models"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a replicated simulation study");
  sim_cmd->add_option("--config", sim.config, "Study config JSON")->check(CLI::ExistingFile);
  sim_cmd->add_option("--preset", sim.preset, "Built-in study (desk)")->check(CLI::IsMember({"desk"}));
  sim_cmd->add_option("--reps", sim.reps, "Override replications");
  sim_cmd->add_option("--seed", sim.seed, "Override master seed");
  sim_cmd->add_option("--parallelism", sim.parallelism, "Worker threads");
  sim_cmd->add_option("--out", sim.out, "Output directory")->required();

  EstimateArgs est;
  auto* est_cmd = app.add_subcommand("estimate", "Estimate CATE coefficients from a CSV");
  est_cmd->add_option("--data", est.data, "CSV with header y,d,x1..xp")->required();
  est_cmd->add_option("--m", est.m, "Cross-fitting folds")->capture_default_str();
  est_cmd->add_option("--lambda", est.lambda, "Penalty rule")
      ->check(CLI::IsMember({"theory", "cv"}))
      ->capture_default_str();
  est_cmd->add_option("--weights", est.weights, "Variance weights")
      ->check(CLI::IsMember({"constant", "covariate", "constant_per_arm", "covariate_dependent"}))
      ->capture_default_str();
  est_cmd->add_option("--alpha", est.alpha, "Miscoverage level")->capture_default_str();
  est_cmd->add_option("--seed", est.seed, "Seed for folds and CV")->capture_default_str();
  est_cmd->add_option("--ridge-outcome", est.ridge_outcome, "Outcome ridge penalty (default 1/sqrt(n))");
  est_cmd->add_option("--ridge-propensity", est.ridge_propensity,
                      "Propensity ridge penalty (default 1/sqrt(n))");
  est_cmd->add_option("--out", est.out, "Output JSON (default stdout)");

  std::string records, report_out;
  auto* rep_cmd = app.add_subcommand("report", "Recompute the summary from records.csv");
  rep_cmd->add_option("--records", records, "records.csv")->required();
  rep_cmd->add_option("--out", report_out, "Output JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*sim_cmd) return simulate(sim);
    if (*est_cmd) return estimate(est);
    if (*rep_cmd) return report(records, report_out);
  } catch (const wtdl::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const wtdl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
