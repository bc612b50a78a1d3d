#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rwz/inference.hpp"
#include "rwz/io.hpp"
#include "rwz/model.hpp"
#include "rwz/ope.hpp"

namespace rwz {

// Monte Carlo sweep description.  Episodes are fresh per (replication, n)
// cell and shared across schemes inside a cell, so scheme comparisons see the
// same data.
struct ExperimentSpec {
  std::string name = "experiment";
  PlmConfig model;
  PolicyFamilyConfig policy;
  std::vector<WeightScheme> schemes = {WeightScheme::Consistent};
  std::vector<int> n_grid = {1000};
  int replications = 1;
  double level = 0.05;
  std::uint64_t seed = 1;
  int band_draws = 100000;
  int theta0_oracle_samples = 200000;
  std::optional<WeightConfig> weights;  // default derived from the model
  NuisanceConfig nuisance;
  bool ope_mode = false;
  std::string reference = "always:1";

  void validate() const;
  WeightConfig effective_weights() const;
};

json to_json(const ExperimentSpec& spec);
ExperimentSpec experiment_spec_from_json(const json& j);
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

// sigma2_floor = 0.25 * Var(eps), m2_cap = (2 * outcome bound)^2.
WeightConfig default_weight_config(const PlmConfig& config);

ReferencePolicy reference_from_string(const std::string& text);

// One (replication, n, scheme) cell.
struct ResultRow {
  std::string experiment;
  WeightScheme scheme = WeightScheme::Consistent;
  double alpha = 0.0;
  int n = 0;
  int replication = 0;
  std::string status = "ok";  // error text when a cell failed
  bool event_ok = false;
  double runtime_ms = 0.0;
  VectorXd theta_hat;
  VectorXd std_error;          // empty when the event failed
  std::vector<int> ci_cover;   // per coordinate, against simulator truth
  int band_cover = 0;
};

// All cells of one replication; seeding is hash(master, replication, n).
std::vector<ResultRow> run_replication(const ExperimentSpec& spec,
                                       const ParameterVector& theta_true,
                                       int replication);

struct MonteCarloOutput {
  std::vector<ResultRow> rows;
  ParameterVector theta_true;
  // OPE mode: the counterfactual oracle value used for coverage.
  double oracle_value = 0.0;
  double oracle_value_se = 0.0;
};

MonteCarloOutput run_montecarlo(const ExperimentSpec& spec, int threads = 0);

void write_results_csv(const MonteCarloOutput& output,
                       const std::filesystem::path& path);
// Aggregated per (scheme, n, coordinate): coverage, binomial se, KS statistic.
void write_coverage_csv(const MonteCarloOutput& output,
                        const std::filesystem::path& path);
json summary_json(const MonteCarloOutput& output, const ExperimentSpec& spec);

// Least-squares slope of log(L2 error) on log(n) per scheme.
double rate_slope(const MonteCarloOutput& output, WeightScheme scheme);

}  // namespace rwz
