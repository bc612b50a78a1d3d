// Command line front end: simulate episodic data, estimate from logs, drive
// Monte Carlo sweeps, evaluate reference policies, validate configs.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "rwz/experiment.hpp"
#include "rwz/inference.hpp"
#include "rwz/io.hpp"
#include "rwz/ope.hpp"

namespace fs = std::filesystem;
using rwz::json;

namespace {

struct SimulateArgs {
  std::string config_path;
  std::string policy = "fixed_randomized";
  double alpha = 0.0;
  double explore_c = 0.05;
  double cov_floor_c = 0.05;
  double temperature = 1.0;
  int n = 1000;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
};

struct EstimateArgs {
  std::string config_path;
  std::string episodes_path;
  std::string policies_path;
  std::string scheme = "consistent";
  double alpha = 0.0;
  std::string out_path = "estimates.json";
};

struct OpeArgs : EstimateArgs {
  std::string reference = "always:1";
  double level = 0.05;
};

int run_simulate(const SimulateArgs& args) {
  const rwz::PlmConfig config = rwz::load_plm_config(args.config_path);
  rwz::PolicyFamilyConfig pf;
  pf.kind = rwz::policy_kind_from_name(args.policy);
  pf.alpha = args.alpha;
  pf.explore_c = args.explore_c;
  pf.cov_floor_c = args.cov_floor_c;
  pf.temperature = args.temperature;
  rwz::PolicyFamily family(
      pf, &config.features,
      rwz::make_consistent_refit(&config.features,
                                 rwz::default_weight_config(config), pf.alpha));
  const rwz::SimulatedRun run =
      rwz::simulate_run(config, family, args.n, args.seed);

  fs::create_directories(args.out_dir);
  rwz::write_episode_log(run.episodes, fs::path(args.out_dir) / "episodes.ndjson");
  rwz::write_policy_log(run.snapshots, fs::path(args.out_dir) / "policies.ndjson");
  std::cout << "wrote " << run.episodes.size() << " episodes to " << args.out_dir
            << "\n";
  return 0;
}

rwz::EstimationInput load_input(const EstimateArgs& args,
                                const rwz::PlmConfig& config,
                                std::vector<rwz::EpisodeRecord>& episodes,
                                std::vector<rwz::PolicySnapshot>& snapshots) {
  episodes = rwz::read_episode_log(args.episodes_path);
  snapshots = rwz::read_policy_log(args.policies_path);
  rwz::EstimationInput input;
  input.episodes = episodes;
  input.snapshots = snapshots;
  input.features = &config.features;
  input.alpha = args.alpha;
  return input;
}

int run_estimate(const EstimateArgs& args) {
  const rwz::PlmConfig config = rwz::load_plm_config(args.config_path);
  std::vector<rwz::EpisodeRecord> episodes;
  std::vector<rwz::PolicySnapshot> snapshots;
  const rwz::EstimationInput input = load_input(args, config, episodes, snapshots);

  rwz::SchemeSpec scheme;
  scheme.scheme = rwz::weight_scheme_from_name(args.scheme);
  scheme.weights = rwz::default_weight_config(config);
  if (scheme.scheme == rwz::WeightScheme::Oracle)
    scheme.oracle_f = [&config](const rwz::EpisodeRecord& ep) {
      std::vector<double> f(static_cast<std::size_t>(ep.horizon()) + 1);
      for (int j = 0; j <= ep.horizon(); ++j)
        f[static_cast<std::size_t>(j)] = config.f_oracle(j, ep.contexts);
      return f;
    };

  const rwz::ZEstimate est = rwz::solve(input, scheme);
  std::ofstream out(args.out_path);
  if (!out) throw rwz::ConfigError("cannot write " + args.out_path);
  out << rwz::to_json(est).dump(2) << '\n';
  std::cout << "theta_hat[0] = " << est.theta_hat.theta0()
            << (est.event_ok ? "" : "  (event failed; zero fallback)") << "\n";
  return 0;
}

int run_ope(const OpeArgs& args) {
  const rwz::PlmConfig config = rwz::load_plm_config(args.config_path);
  std::vector<rwz::EpisodeRecord> episodes;
  std::vector<rwz::PolicySnapshot> snapshots;
  const rwz::EstimationInput input = load_input(args, config, episodes, snapshots);

  rwz::SchemeSpec scheme;
  scheme.scheme = rwz::weight_scheme_from_name(args.scheme);
  scheme.weights = rwz::default_weight_config(config);
  scheme.nuisance.plm_mode = false;

  const rwz::ReferencePolicy reference = rwz::reference_from_string(args.reference);
  const rwz::OpeResult result =
      rwz::evaluate_policy(input, reference, scheme, args.level);

  json report;
  report["reference"] = reference.id();
  report["estimate"] = rwz::to_json(result.estimate);
  report["value"] = result.value_interval.center[0];
  report["value_half_width"] = result.value_interval.half_width[0];
  report["level"] = args.level;
  report["degenerate"] = result.value_interval.degenerate;
  std::ofstream out(args.out_path);
  if (!out) throw rwz::ConfigError("cannot write " + args.out_path);
  out << report.dump(2) << '\n';
  std::cout << "value(" << reference.id() << ") = "
            << result.value_interval.center[0] << " +- "
            << result.value_interval.half_width[0] << "\n";
  return 0;
}

int run_montecarlo_cmd(const std::string& spec_path, const std::string& out_dir,
                       int threads) {
  const rwz::ExperimentSpec spec = rwz::load_experiment_spec(spec_path);
  const rwz::MonteCarloOutput output = rwz::run_montecarlo(spec, threads);
  fs::create_directories(out_dir);
  rwz::write_results_csv(output, fs::path(out_dir) / "results.csv");
  rwz::write_coverage_csv(output, fs::path(out_dir) / "coverage.csv");
  std::ofstream summary(fs::path(out_dir) / "summary.json");
  summary << rwz::summary_json(output, spec).dump(2) << '\n';
  std::cout << "wrote " << output.rows.size() << " result rows to " << out_dir
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"re-weighted Z-estimation for adaptively collected episodes"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "generate an episode log");
  simulate->add_option("--config", sim.config_path, "model config json")->required();
  simulate->add_option("--policy", sim.policy,
                       "fixed_randomized | epsilon_greedy | softmax");
  simulate->add_option("--alpha", sim.alpha, "exploration decay exponent");
  simulate->add_option("--explore-c", sim.explore_c, "exploration floor constant");
  simulate->add_option("--cov-floor-c", sim.cov_floor_c,
                       "declared covariance floor constant");
  simulate->add_option("--temperature", sim.temperature, "softmax temperature");
  simulate->add_option("--n", sim.n, "episode count")->required();
  simulate->add_option("--seed", sim.seed, "master seed");
  simulate->add_option("--out", sim.out_dir, "output directory");

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "estimate from logs");
  estimate->add_option("--config", est.config_path)->required();
  estimate->add_option("--episodes", est.episodes_path)->required();
  estimate->add_option("--policies", est.policies_path)->required();
  estimate->add_option("--scheme", est.scheme,
                       "uniform | consistent | oracle | feasible");
  estimate->add_option("--alpha", est.alpha);
  estimate->add_option("--out", est.out_path);

  std::string mc_spec, mc_out = "mc-out";
  int mc_threads = 0;
  auto* montecarlo = app.add_subcommand("montecarlo", "replication sweep");
  montecarlo->add_option("--spec", mc_spec, "experiment spec json")->required();
  montecarlo->add_option("--out", mc_out, "output directory");
  montecarlo->add_option("--threads", mc_threads, "worker threads (0 = auto)");

  OpeArgs ope;
  auto* ope_cmd = app.add_subcommand("ope", "dynamic off-policy evaluation");
  ope_cmd->add_option("--config", ope.config_path)->required();
  ope_cmd->add_option("--episodes", ope.episodes_path)->required();
  ope_cmd->add_option("--policies", ope.policies_path)->required();
  ope_cmd->add_option("--reference", ope.reference, "always:<arm> | threshold:...");
  ope_cmd->add_option("--scheme", ope.scheme);
  ope_cmd->add_option("--alpha", ope.alpha);
  ope_cmd->add_option("--level", ope.level);
  ope_cmd->add_option("--out", ope.out_path);

  std::string validate_path;
  auto* validate = app.add_subcommand("validate-config", "schema check");
  validate->add_option("config", validate_path, "model config json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (simulate->parsed()) return run_simulate(sim);
    if (estimate->parsed()) return run_estimate(est);
    if (montecarlo->parsed())
      return run_montecarlo_cmd(mc_spec, mc_out, mc_threads);
    if (ope_cmd->parsed()) return run_ope(ope);
    if (validate->parsed()) {
      rwz::load_plm_config(validate_path);
      std::cout << "ok\n";
      return 0;
    }
  } catch (const rwz::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const rwz::Error& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
