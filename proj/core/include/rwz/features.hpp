#pragma once

#include <span>
#include <string>

#include "rwz/types.hpp"

namespace rwz {

// Known feature map phi_j with the zero-treatment annihilation constraint:
// eval(j, x, (tau_1..tau_{j-1}, 0)) == 0 for every history.
//
//   TreatmentTimesContext      phi_j = tau_j * X_j
//   TreatmentTimesContextPair  phi_j = tau_j * (X_j .* X_{j-1}), X_0 := 1
//   OneHot                     phi_j = e_{tau_j - 1}, zero for the control arm
//                              (requires dim == arms - 1)
enum class FeatureKind {
  TreatmentTimesContext,
  TreatmentTimesContextPair,
  OneHot,
};

struct FeatureMap {
  FeatureKind kind = FeatureKind::TreatmentTimesContext;
  int horizon = 0;
  int dim = 0;
  TreatmentSpace treatments;
  // Sup-norm bound on contexts in the declared domain; used for phi_max().
  double context_bound = 1.0;

  void validate() const;

  // Evaluates phi_j from the first j contexts and j treatments of a history.
  VectorXd eval(int stage, std::span<const VectorXd> contexts,
                std::span<const int> treatment_arms) const;

  // Declared bound on ||phi_j||_2 over the bounded domain.
  double phi_max() const;
};

std::string feature_kind_name(FeatureKind kind);
FeatureKind feature_kind_from_name(const std::string& name);

}  // namespace rwz
