#include "rwz/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <thread>

#include <nlohmann/json.hpp>

#include "rwz/stats.hpp"

namespace rwz {

void ExperimentSpec::validate() const {
  model.validate();
  policy.validate(model.horizon);
  if (schemes.empty()) throw ConfigError("experiment needs at least one scheme");
  if (n_grid.empty()) throw ConfigError("experiment needs an n grid");
  if (!std::is_sorted(n_grid.begin(), n_grid.end()))
    throw ConfigError("n grid must be sorted ascending");
  for (int n : n_grid)
    if (n < 1 + model.dim * model.horizon)
      throw ConfigError("n grid entry smaller than the parameter count");
  if (replications < 1) throw ConfigError("replication count must be >= 1");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("level must lie in (0,1)");
  effective_weights().validate();
  if (ope_mode) reference_from_string(reference);
}

WeightConfig ExperimentSpec::effective_weights() const {
  return weights ? *weights : default_weight_config(model);
}

WeightConfig default_weight_config(const PlmConfig& config) {
  WeightConfig w;
  const double eps_var = config.eps.variance();
  w.sigma2_floor = eps_var > 0.0 ? 0.25 * eps_var : 1e-4;
  const double bound = 2.0 * config.outcome_bound();
  w.m2_cap = std::max(bound * bound, w.sigma2_floor);
  return w;
}

ReferencePolicy reference_from_string(const std::string& text) {
  if (text.rfind("always:", 0) == 0) {
    ReferencePolicy pi;
    pi.kind = ReferencePolicy::Kind::Always;
    pi.arm = std::stoi(text.substr(7));
    return pi;
  }
  if (text.rfind("threshold:", 0) == 0) {
    // threshold:<coord>:<cutoff>:<arm_above>:<arm_below>
    ReferencePolicy pi;
    pi.kind = ReferencePolicy::Kind::Threshold;
    std::string rest = text.substr(10);
    const auto take = [&rest]() {
      const auto pos = rest.find(':');
      std::string tok = rest.substr(0, pos);
      rest = pos == std::string::npos ? std::string() : rest.substr(pos + 1);
      return tok;
    };
    pi.coordinate = std::stoi(take());
    pi.cutoff = std::stod(take());
    pi.arm_above = std::stoi(take());
    pi.arm_below = std::stoi(take());
    return pi;
  }
  throw ConfigError("unknown reference policy: " + text);
}

json to_json(const ExperimentSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["model"] = to_json(spec.model);
  j["policy"] = to_json(spec.policy);
  json schemes = json::array();
  for (WeightScheme s : spec.schemes) schemes.push_back(weight_scheme_name(s));
  j["schemes"] = std::move(schemes);
  j["n_grid"] = spec.n_grid;
  j["replications"] = spec.replications;
  j["level"] = spec.level;
  j["seed"] = spec.seed;
  j["band_draws"] = spec.band_draws;
  j["theta0_oracle_samples"] = spec.theta0_oracle_samples;
  if (spec.weights)
    j["weights"] = {{"sigma2_floor", spec.weights->sigma2_floor},
                    {"m2_cap", spec.weights->m2_cap},
                    {"eig_tol", spec.weights->eig_tol}};
  j["nuisance"] = {{"degree", spec.nuisance.degree},
                   {"ridge", spec.nuisance.ridge},
                   {"output_clamp", spec.nuisance.output_clamp},
                   {"plm_mode", spec.nuisance.plm_mode}};
  j["mode"] = spec.ope_mode ? "ope" : "baseline";
  if (spec.ope_mode) j["reference"] = spec.reference;
  return j;
}

ExperimentSpec experiment_spec_from_json(const json& j) try {
  ExperimentSpec spec;
  spec.name = j.value("name", std::string("experiment"));
  spec.model = plm_config_from_json(j.at("model"));
  spec.policy = policy_family_from_json(j.at("policy"));
  spec.schemes.clear();
  for (const json& s : j.at("schemes"))
    spec.schemes.push_back(weight_scheme_from_name(s.get<std::string>()));
  spec.n_grid = j.at("n_grid").get<std::vector<int>>();
  spec.replications = j.at("replications").get<int>();
  spec.level = j.value("level", 0.05);
  spec.seed = j.value("seed", std::uint64_t{1});
  spec.band_draws = j.value("band_draws", 100000);
  spec.theta0_oracle_samples = j.value("theta0_oracle_samples", 200000);
  if (j.contains("weights")) {
    WeightConfig w;
    w.sigma2_floor = j["weights"].at("sigma2_floor").get<double>();
    w.m2_cap = j["weights"].at("m2_cap").get<double>();
    w.eig_tol = j["weights"].value("eig_tol", 1e-12);
    spec.weights = w;
  }
  if (j.contains("nuisance")) {
    spec.nuisance.degree = j["nuisance"].value("degree", 2);
    spec.nuisance.ridge = j["nuisance"].value("ridge", 1e-8);
    spec.nuisance.output_clamp = j["nuisance"].value("output_clamp", 1e6);
    spec.nuisance.plm_mode = j["nuisance"].value("plm_mode", true);
  }
  spec.ope_mode = j.value("mode", std::string("baseline")) == "ope";
  spec.reference = j.value("reference", std::string("always:1"));
  spec.validate();
  return spec;
} catch (const json::exception& e) {
  throw ConfigError(std::string("experiment spec schema error: ") + e.what());
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read experiment spec: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("experiment spec parse error: " + std::string(e.what()));
  }
  return experiment_spec_from_json(j);
}

namespace {

SchemeSpec scheme_spec_for(const ExperimentSpec& spec, WeightScheme scheme) {
  SchemeSpec s;
  s.scheme = scheme;
  s.weights = spec.effective_weights();
  s.nuisance = spec.nuisance;
  if (scheme == WeightScheme::Oracle) {
    const PlmConfig* model = &spec.model;
    s.oracle_f = [model](const EpisodeRecord& ep) {
      std::vector<double> f(static_cast<std::size_t>(ep.horizon()) + 1);
      for (int j = 0; j <= ep.horizon(); ++j)
        f[static_cast<std::size_t>(j)] = model->f_oracle(j, ep.contexts);
      return f;
    };
  }
  return s;
}

ResultRow make_row(const ExperimentSpec& spec, WeightScheme scheme, int n,
                   int replication) {
  ResultRow row;
  row.experiment = spec.name;
  row.scheme = scheme;
  row.alpha = spec.policy.alpha;
  row.n = n;
  row.replication = replication;
  const int p = 1 + spec.model.dim * spec.model.horizon;
  row.theta_hat = VectorXd::Zero(p);
  row.ci_cover.assign(static_cast<std::size_t>(p), 0);
  return row;
}

}  // namespace

std::vector<ResultRow> run_replication(const ExperimentSpec& spec,
                                       const ParameterVector& theta_true,
                                       int replication) {
  const int p = 1 + spec.model.dim * spec.model.horizon;
  std::vector<ResultRow> rows;

  const std::optional<ReferencePolicy> reference =
      spec.ope_mode ? std::optional<ReferencePolicy>(
                          reference_from_string(spec.reference))
                    : std::nullopt;

  for (int n : spec.n_grid) {
    const std::uint64_t cell_seed =
        derive_seed(spec.seed, {static_cast<std::uint64_t>(replication) + 1,
                                static_cast<std::uint64_t>(n)});
    PolicyFamily family(
        spec.policy, &spec.model.features,
        make_consistent_refit(&spec.model.features, spec.effective_weights(),
                              spec.policy.alpha));
    const SimulatedRun run = simulate_run(spec.model, family, n, cell_seed);

    EstimationInput input;
    input.episodes = run.episodes;
    input.snapshots = run.snapshots;
    input.features = &spec.model.features;
    input.alpha = spec.policy.alpha;

    for (WeightScheme scheme : spec.schemes) {
      ResultRow row = make_row(spec, scheme, n, replication);
      const auto start = std::chrono::steady_clock::now();
      try {
        SchemeSpec sspec = scheme_spec_for(spec, scheme);
        ZEstimate est;
        if (reference) {
          const OpeResult ope = evaluate_policy(input, *reference, sspec,
                                                spec.level);
          est = ope.estimate;
          row.ci_cover[0] =
              ope.value_interval.covers_scalar(theta_true.theta0()) ? 1 : 0;
        } else {
          est = solve(input, sspec);
          for (int k = 0; k < p; ++k) {
            VectorXd dir = VectorXd::Zero(p);
            dir[k] = 1.0;
            const ConfidenceRegion ci = confidence_interval(est, dir, spec.level);
            row.ci_cover[static_cast<std::size_t>(k)] =
                ci.covers_scalar(theta_true.flat[k]) ? 1 : 0;
          }
          const ConfidenceRegion band = confidence_band(
              est, spec.level, spec.band_draws, derive_seed(cell_seed, {0xBA4DULL}));
          row.band_cover = band.covers_vector(theta_true.flat) ? 1 : 0;
        }
        row.event_ok = est.event_ok;
        row.theta_hat = est.theta_hat.flat;
        if (est.event_ok && !reference)
          row.std_error = standardized_error(est, theta_true);
      } catch (const Error& e) {
        row.status = e.what();
      }
      row.runtime_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

MonteCarloOutput run_montecarlo(const ExperimentSpec& spec, int threads) {
  spec.validate();
  MonteCarloOutput out;
  const TrueParameters truth = derive_true_parameters(
      spec.model, spec.theta0_oracle_samples,
      derive_seed(spec.seed, {0x7275746874ULL}));
  out.theta_true = truth.theta;

  if (spec.ope_mode) {
    const ReferencePolicy reference = reference_from_string(spec.reference);
    Rng rng(derive_seed(spec.seed, {0x6F7261636CULL}));
    const McValue v = counterfactual_value(
        spec.model,
        [&reference](int stage, std::span<const VectorXd> contexts,
                     std::span<const int> arms, Rng&) {
          return reference.choose(stage, contexts, arms);
        },
        spec.theta0_oracle_samples, rng);
    out.oracle_value = v.mean;
    out.oracle_value_se = v.se;
    out.theta_true.theta0() = v.mean;
  }

  if (threads <= 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    threads = hw == 0 ? 1 : static_cast<int>(hw);
  }

  std::vector<std::vector<ResultRow>> slots(
      static_cast<std::size_t>(spec.replications));
  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      const int rep = next.fetch_add(1);
      if (rep >= spec.replications) return;
      slots[static_cast<std::size_t>(rep)] =
          run_replication(spec, out.theta_true, rep);
    }
  };
  if (threads <= 1 || spec.replications <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const int count = std::min(threads, spec.replications);
    pool.reserve(static_cast<std::size_t>(count));
    for (int t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (auto& slot : slots)
    for (auto& row : slot) out.rows.push_back(std::move(row));
  return out;
}

void write_results_csv(const MonteCarloOutput& output,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write results csv: " + path.string());
  out.precision(17);
  const int p =
      output.rows.empty() ? 0 : static_cast<int>(output.rows[0].theta_hat.size());
  out << "experiment,scheme,alpha,n,replication,status,event_ok,runtime_ms";
  for (int k = 0; k < p; ++k) out << ",th_" << k;
  for (int k = 0; k < p; ++k) out << ",se_" << k;
  for (int k = 0; k < p; ++k) out << ",cov_" << k;
  out << ",band\n";
  for (const ResultRow& row : output.rows) {
    std::string status = row.status;
    std::replace(status.begin(), status.end(), ',', ';');
    out << row.experiment << ',' << weight_scheme_name(row.scheme) << ','
        << row.alpha << ',' << row.n << ',' << row.replication << ',' << status
        << ',' << (row.event_ok ? 1 : 0) << ',' << row.runtime_ms;
    for (int k = 0; k < p; ++k) out << ',' << row.theta_hat[k];
    for (int k = 0; k < p; ++k) {
      out << ',';
      if (row.std_error.size() == p)
        out << row.std_error[k];
      else
        out << "nan";
    }
    for (int k = 0; k < p; ++k) out << ',' << row.ci_cover[static_cast<std::size_t>(k)];
    out << ',' << row.band_cover << '\n';
  }
}

void write_coverage_csv(const MonteCarloOutput& output,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write coverage csv: " + path.string());
  out.precision(12);
  out << "scheme,alpha,n,coordinate,coverage,se,ks\n";

  std::map<std::pair<std::string, int>, std::vector<const ResultRow*>> cells;
  for (const ResultRow& row : output.rows)
    cells[{weight_scheme_name(row.scheme), row.n}].push_back(&row);

  for (const auto& [key, rows] : cells) {
    const int p = static_cast<int>(rows.front()->theta_hat.size());
    for (int k = 0; k < p; ++k) {
      double hits = 0.0;
      std::vector<double> errs;
      for (const ResultRow* row : rows) {
        hits += row->ci_cover[static_cast<std::size_t>(k)];
        if (row->std_error.size() == p) errs.push_back(row->std_error[k]);
      }
      const double r = static_cast<double>(rows.size());
      const double cover = hits / r;
      const double se = std::sqrt(cover * (1.0 - cover) / r);
      const double ks = errs.empty() ? std::nan("") : ks_statistic_normal(errs);
      out << key.first << ',' << rows.front()->alpha << ',' << key.second << ','
          << k << ',' << cover << ',' << se << ',' << ks << '\n';
    }
  }
}

json summary_json(const MonteCarloOutput& output, const ExperimentSpec& spec) {
  json j;
  j["experiment"] = spec.name;
  j["theta_true"] = [&] {
    json arr = json::array();
    for (Eigen::Index k = 0; k < output.theta_true.flat.size(); ++k)
      arr.push_back(output.theta_true.flat[k]);
    return arr;
  }();
  if (spec.ope_mode) {
    j["oracle_value"] = output.oracle_value;
    j["oracle_value_se"] = output.oracle_value_se;
  }

  std::map<std::pair<std::string, int>, std::vector<const ResultRow*>> cells;
  for (const ResultRow& row : output.rows)
    cells[{weight_scheme_name(row.scheme), row.n}].push_back(&row);

  json cell_list = json::array();
  for (const auto& [key, rows] : cells) {
    double err_sq = 0.0;
    int ok = 0;
    double band = 0.0;
    for (const ResultRow* row : rows) {
      err_sq += (row->theta_hat - output.theta_true.flat).squaredNorm();
      ok += row->event_ok ? 1 : 0;
      band += row->band_cover;
    }
    json cell;
    cell["scheme"] = key.first;
    cell["n"] = key.second;
    cell["replications"] = rows.size();
    cell["event_ok"] = ok;
    cell["l2_error"] = std::sqrt(err_sq / static_cast<double>(rows.size()));
    cell["band_coverage"] = band / static_cast<double>(rows.size());
    cell_list.push_back(std::move(cell));
  }
  j["cells"] = std::move(cell_list);

  json slopes = json::object();
  for (WeightScheme scheme : spec.schemes)
    if (spec.n_grid.size() >= 2)
      slopes[weight_scheme_name(scheme)] = rate_slope(output, scheme);
  j["rate_slopes"] = std::move(slopes);
  return j;
}

double rate_slope(const MonteCarloOutput& output, WeightScheme scheme) {
  std::map<int, std::pair<double, int>> err_by_n;
  for (const ResultRow& row : output.rows) {
    if (row.scheme != scheme) continue;
    auto& [sq, count] = err_by_n[row.n];
    sq += (row.theta_hat - output.theta_true.flat).squaredNorm();
    count += 1;
  }
  if (err_by_n.size() < 2)
    throw ConfigError("rate slope needs at least two n values");

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  double count = 0.0;
  for (const auto& [n, acc] : err_by_n) {
    const double x = std::log(static_cast<double>(n));
    const double y =
        0.5 * std::log(acc.first / static_cast<double>(acc.second));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    count += 1.0;
  }
  return (count * sxy - sx * sy) / (count * sxx - sx * sx);
}

}  // namespace rwz
