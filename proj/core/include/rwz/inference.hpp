#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rwz/estimator.hpp"
#include "rwz/model.hpp"
#include "rwz/policy.hpp"

namespace rwz {

// Confidence region from a flagged estimate.  Interval: center +- half_width
// on a projection.  Band: per-coordinate half-widths forming a simultaneous
// hyper-rectangle.  A failed eigenvalue event gives the degenerate region
// with quantile 0 and zero width.
struct ConfidenceRegion {
  enum class Kind { Interval, Band } kind = Kind::Interval;
  double level = 0.0;        // confidence level a
  VectorXd direction;        // interval only
  VectorXd center;           // size 1 for intervals
  VectorXd half_width;
  double quantile = 0.0;
  bool degenerate = false;
  int mc_draws = 0;          // band only
  std::uint64_t mc_seed = 0;

  // Degenerate regions cover only an exact hit on the center.
  bool covers_scalar(double value) const;
  bool covers_vector(const VectorXd& theta) const;
};

// CI_a = [l^T theta_hat +- n^{(alpha-1)/2} q_{l,a/2}] where q is the upper
// a/2 quantile of N(0, l^T B_n^{-1} B_n^{-T} l), in closed form.
ConfidenceRegion confidence_interval(const ZEstimate& estimate,
                                     const VectorXd& direction, double level);

// Simultaneous band via the max-norm quantile of
// N(0, D^{-1/2} B^{-1} B^{-T} D^{-1/2}), estimated by seeded Monte Carlo
// with d_n = diag(B^{-1} B^{-T}).
ConfidenceRegion confidence_band(const ZEstimate& estimate, double level,
                                 int mc_draws, std::uint64_t seed);

// Monte Carlo coverage/normality study against the simulator ground truth.
struct CoverageSpec {
  PolicyFamilyConfig policy;
  WeightScheme scheme = WeightScheme::Oracle;
  WeightConfig weights;
  NuisanceConfig nuisance;
  int n = 2000;
  int replications = 200;
  double level = 0.05;
  std::uint64_t seed = 1;
  int band_draws = 100000;
  int theta0_oracle_samples = 200000;
};

struct CoverageReport {
  struct CoordinateRow {
    int coordinate = 0;
    double ci_coverage = 0.0;
    double ci_se = 0.0;
    double ks_statistic = 0.0;
    double std_err_mean = 0.0;
    double std_err_var = 0.0;
  };
  std::vector<CoordinateRow> rows;
  double band_coverage = 0.0;
  double band_se = 0.0;
  int replications = 0;
  int event_failures = 0;
  ParameterVector theta_true;
  // Standardized errors per replication (flagged replications only), kept for
  // downstream normality diagnostics.
  std::vector<VectorXd> standardized_errors;
};

CoverageReport coverage_experiment(const PlmConfig& config,
                                   const CoverageSpec& spec);

}  // namespace rwz
