#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rwz/moments.hpp"
#include "rwz/nuisance.hpp"
#include "rwz/policy.hpp"
#include "rwz/weights.hpp"

namespace rwz {

// Weighting scheme plus whatever that scheme needs.
//   Oracle   requires oracle_f: episode -> f_{i,0..l} from the simulator truth.
//   Feasible runs a prequential sweep by default: the running consistent
//            estimate and the nuisance model are refit at episode counts
//            {2^k >= refit_start} and frozen in between, so weights for
//            episode i only ever see episodes before i.  With split_half the
//            nuisances are fitted once on the first half and only the second
//            half enters the estimate.
// weight_scale multiplies every H_i; a diagnostics hook, not part of any
// scheme.
struct SchemeSpec {
  WeightScheme scheme = WeightScheme::Consistent;
  WeightConfig weights;
  std::function<std::vector<double>(const EpisodeRecord&)> oracle_f;
  NuisanceConfig nuisance;
  int refit_start = 16;
  bool split_half = false;
  double weight_scale = 1.0;
};

struct EstimationInput {
  std::span<const EpisodeRecord> episodes;
  std::span<const PolicySnapshot> snapshots;  // indexed by EpisodeRecord::policy_id
  const FeatureMap* features = nullptr;
  MomentMode mode = MomentMode::Baseline;
  // Ope mode: per-episode blip contrasts against the reference policy.
  std::function<BlipContrast(const EpisodeRecord&)> contrast = nullptr;
  double alpha = 0.0;
  // Assumption-4 constant for the eigenvalue events; 0 means "take it from
  // the snapshots' declared cov_floor_c".
  double cov_floor_c = 0.0;
};

// Re-weighted Z-estimate.  When the eigenvalue event fails the estimate is
// the zero vector with event_ok == false, and confidence regions built from
// it are degenerate.
struct ZEstimate {
  ParameterVector theta_hat;
  MatrixXd b_n;            // -n^{alpha/2 - 1} sum_i H_i J_i
  bool event_ok = false;
  double min_abs_eig = 0.0;
  double event_threshold = 0.0;
  WeightScheme scheme = WeightScheme::Uniform;
  int n = 0;
  double alpha = 0.0;
  // n^{-1/2} sum_i H_i m(Z_i; theta_ref); empty unless theta_ref was passed.
  VectorXd score;
  std::string note;
};

// Solves the weighted moment system via the affine closed form.  Singular or
// floor-violating inputs produce the flagged zero fallback, not an error;
// only configuration problems throw.
ZEstimate solve(const EstimationInput& input, const SchemeSpec& scheme,
                const ParameterVector* theta_ref = nullptr);

// n^{(1-alpha)/2} B_n (theta_hat - theta_true); defined only on the event.
VectorXd standardized_error(const ZEstimate& estimate,
                            const ParameterVector& theta_true);

// Consistent-scheme refitter for adaptive policy families: returns the new
// running estimate, or nullopt when the solve falls back.
RefitFn make_consistent_refit(const FeatureMap* features, WeightConfig wcfg,
                              double alpha);

}  // namespace rwz
