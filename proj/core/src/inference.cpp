#include "rwz/inference.hpp"

#include <Eigen/LU>
#include <cmath>

#include "rwz/rng.hpp"
#include "rwz/stats.hpp"

namespace rwz {
namespace {

double alpha_scale(const ZEstimate& est) {
  return std::pow(static_cast<double>(est.n), (est.alpha - 1.0) / 2.0);
}

}  // namespace

bool ConfidenceRegion::covers_scalar(double value) const {
  if (kind != Kind::Interval) throw ConfigError("scalar coverage needs an interval");
  return std::abs(value - center[0]) <= half_width[0];
}

bool ConfidenceRegion::covers_vector(const VectorXd& theta) const {
  if (kind != Kind::Band) throw ConfigError("vector coverage needs a band");
  if (theta.size() != center.size()) throw ConfigError("band dimension mismatch");
  return ((theta - center).cwiseAbs().array() <= half_width.array()).all();
}

ConfidenceRegion confidence_interval(const ZEstimate& estimate,
                                     const VectorXd& direction, double level) {
  if (!(level > 0.0 && level < 1.0))
    throw ConfigError("confidence level must lie in (0,1)");
  if (direction.size() != estimate.theta_hat.flat.size())
    throw ConfigError("projection dimension mismatch");

  ConfidenceRegion region;
  region.kind = ConfidenceRegion::Kind::Interval;
  region.level = level;
  region.direction = direction;
  region.center = VectorXd::Constant(1, direction.dot(estimate.theta_hat.flat));
  region.half_width = VectorXd::Zero(1);

  if (!estimate.event_ok) {
    region.degenerate = true;
    return region;
  }

  // var = l^T B^{-1} B^{-T} l = || B^{-T} l ||^2
  const VectorXd bt_inv_l =
      estimate.b_n.transpose().partialPivLu().solve(direction);
  const double sd = bt_inv_l.norm();
  region.quantile = normal_quantile(1.0 - level / 2.0) * sd;
  region.half_width[0] = alpha_scale(estimate) * region.quantile;
  return region;
}

ConfidenceRegion confidence_band(const ZEstimate& estimate, double level,
                                 int mc_draws, std::uint64_t seed) {
  if (!(level > 0.0 && level < 1.0))
    throw ConfigError("confidence level must lie in (0,1)");
  if (mc_draws < 100000)
    throw ConfigError("band quantile needs at least 1e5 Monte Carlo draws");

  ConfidenceRegion region;
  region.kind = ConfidenceRegion::Kind::Band;
  region.level = level;
  region.center = estimate.theta_hat.flat;
  region.half_width = VectorXd::Zero(estimate.theta_hat.flat.size());
  region.mc_draws = mc_draws;
  region.mc_seed = seed;

  if (!estimate.event_ok) {
    region.degenerate = true;
    return region;
  }

  const Eigen::Index p = estimate.b_n.rows();
  const MatrixXd b_inv = estimate.b_n.partialPivLu().inverse();
  const MatrixXd gram = b_inv * b_inv.transpose();
  const VectorXd diag = gram.diagonal();
  if (diag.minCoeff() <= 0.0)
    throw Error("band covariance lost positive definiteness; min diag = " +
                std::to_string(diag.minCoeff()) +
                ", min |eig(B_n)| = " + std::to_string(estimate.min_abs_eig));

  const VectorXd inv_sd = diag.cwiseSqrt().cwiseInverse();
  Rng rng(seed);
  std::vector<double> maxima(static_cast<std::size_t>(mc_draws));
  VectorXd g(p);
  for (int s = 0; s < mc_draws; ++s) {
    for (Eigen::Index k = 0; k < p; ++k) g[k] = rng.normal();
    maxima[static_cast<std::size_t>(s)] =
        (inv_sd.asDiagonal() * (b_inv * g)).cwiseAbs().maxCoeff();
  }
  region.quantile = empirical_quantile(std::move(maxima), 1.0 - level);
  region.half_width = alpha_scale(estimate) * region.quantile * diag.cwiseSqrt();
  return region;
}

CoverageReport coverage_experiment(const PlmConfig& config,
                                   const CoverageSpec& spec) {
  config.validate();
  const int p = 1 + config.dim * config.horizon;

  CoverageReport report;
  report.replications = spec.replications;
  report.theta_true = derive_true_parameters(
                          config, spec.theta0_oracle_samples,
                          derive_seed(spec.seed, {0x7275746874ULL}))
                          .theta;

  SchemeSpec scheme;
  scheme.scheme = spec.scheme;
  scheme.weights = spec.weights;
  scheme.nuisance = spec.nuisance;
  if (spec.scheme == WeightScheme::Oracle)
    scheme.oracle_f = [&config](const EpisodeRecord& ep) {
      std::vector<double> f(static_cast<std::size_t>(ep.horizon()) + 1);
      for (int j = 0; j <= ep.horizon(); ++j)
        f[static_cast<std::size_t>(j)] = config.f_oracle(j, ep.contexts);
      return f;
    };

  std::vector<std::vector<int>> ci_hits(static_cast<std::size_t>(p));
  std::vector<int> band_hits;
  std::vector<std::vector<double>> std_errors(static_cast<std::size_t>(p));

  for (int rep = 0; rep < spec.replications; ++rep) {
    const std::uint64_t run_seed =
        derive_seed(spec.seed, {static_cast<std::uint64_t>(rep) + 1});
    PolicyFamily family(spec.policy, &config.features,
                        make_consistent_refit(&config.features, spec.weights,
                                              spec.policy.alpha));
    const SimulatedRun run = simulate_run(config, family, spec.n, run_seed);

    EstimationInput input;
    input.episodes = run.episodes;
    input.snapshots = run.snapshots;
    input.features = &config.features;
    input.alpha = spec.policy.alpha;

    const ZEstimate est = solve(input, scheme);
    if (!est.event_ok) ++report.event_failures;

    for (int k = 0; k < p; ++k) {
      VectorXd dir = VectorXd::Zero(p);
      dir[k] = 1.0;
      const ConfidenceRegion ci = confidence_interval(est, dir, spec.level);
      ci_hits[static_cast<std::size_t>(k)].push_back(
          ci.covers_scalar(report.theta_true.flat[k]) ? 1 : 0);
    }
    const ConfidenceRegion band = confidence_band(
        est, spec.level, spec.band_draws, derive_seed(run_seed, {0xBA4DULL}));
    band_hits.push_back(band.covers_vector(report.theta_true.flat) ? 1 : 0);

    if (est.event_ok) {
      const VectorXd se = standardized_error(est, report.theta_true);
      report.standardized_errors.push_back(se);
      for (int k = 0; k < p; ++k)
        std_errors[static_cast<std::size_t>(k)].push_back(se[k]);
    }
  }

  auto binom = [&](const std::vector<int>& hits, double& cover, double& se) {
    double s = 0.0;
    for (int h : hits) s += h;
    const double r = static_cast<double>(hits.size());
    cover = s / r;
    se = std::sqrt(cover * (1.0 - cover) / r);
  };

  report.rows.resize(static_cast<std::size_t>(p));
  for (int k = 0; k < p; ++k) {
    auto& row = report.rows[static_cast<std::size_t>(k)];
    row.coordinate = k;
    binom(ci_hits[static_cast<std::size_t>(k)], row.ci_coverage, row.ci_se);
    auto& errs = std_errors[static_cast<std::size_t>(k)];
    if (!errs.empty()) {
      row.ks_statistic = ks_statistic_normal(errs);
      row.std_err_mean = mean_of(errs);
      row.std_err_var = variance_of(errs);
    }
  }
  binom(band_hits, report.band_coverage, report.band_se);
  return report;
}

}  // namespace rwz
