#pragma once

#include <span>
#include <string>

#include "rwz/estimator.hpp"
#include "rwz/inference.hpp"
#include "rwz/moments.hpp"

namespace rwz {

// Deterministic reference policy: a pure map from the stage history to an
// arm.  Stochastic references are out of scope; the blip contrast needs the
// single action pi(history).
struct ReferencePolicy {
  enum class Kind { Always, Threshold } kind = Kind::Always;
  int arm = 0;
  // Threshold: pick arm_above when X_j[coordinate] > cutoff, else arm_below.
  int coordinate = 0;
  double cutoff = 0.0;
  int arm_above = 1;
  int arm_below = 0;

  int choose(int stage, std::span<const VectorXd> contexts,
             std::span<const int> treatment_arms) const;
  std::string id() const;
};

ReferencePolicy always_policy(int arm);

// gamma_{i,j} = phi_j(X, T_{1:j}) - phi_j(X, (T_{1:j-1}, pi(history))).
BlipContrast contrast_features(const EpisodeRecord& episode,
                               const ReferencePolicy& reference,
                               const FeatureMap& features);

struct OpeResult {
  ZEstimate estimate;
  ConfidenceRegion value_interval;  // CI for e_0^T theta = the policy value
};

// Full off-policy pipeline: contrasts, re-weighted solve, CI for the value.
OpeResult evaluate_policy(const EstimationInput& input,
                          const ReferencePolicy& reference, SchemeSpec scheme,
                          double level);

}  // namespace rwz
