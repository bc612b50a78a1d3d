#include "rwz/features.hpp"

#include <cmath>

namespace rwz {

void FeatureMap::validate() const {
  treatments.validate();
  if (horizon < 1) throw ConfigError("feature map horizon must be >= 1");
  if (dim < 1) throw ConfigError("feature map dim must be >= 1");
  if (kind == FeatureKind::OneHot && dim != treatments.count - 1)
    throw ConfigError("one-hot features need dim == arms - 1");
  if (context_bound <= 0.0) throw ConfigError("context bound must be positive");
}

VectorXd FeatureMap::eval(int stage, std::span<const VectorXd> contexts,
                          std::span<const int> treatment_arms) const {
  if (stage < 1 || stage > horizon) throw ConfigError("feature stage out of range");
  if (static_cast<int>(contexts.size()) < stage ||
      static_cast<int>(treatment_arms.size()) < stage)
    throw ConfigError("feature eval needs the first j contexts and treatments");

  const int arm = treatment_arms[static_cast<std::size_t>(stage - 1)];
  const double tau = treatments.value(arm);

  switch (kind) {
    case FeatureKind::TreatmentTimesContext: {
      const VectorXd& x = contexts[static_cast<std::size_t>(stage - 1)];
      if (x.size() != dim) throw ConfigError("context dim mismatch");
      return tau * x;
    }
    case FeatureKind::TreatmentTimesContextPair: {
      const VectorXd& x = contexts[static_cast<std::size_t>(stage - 1)];
      if (x.size() != dim) throw ConfigError("context dim mismatch");
      if (stage == 1) return tau * x;
      const VectorXd& prev = contexts[static_cast<std::size_t>(stage - 2)];
      return tau * x.cwiseProduct(prev);
    }
    case FeatureKind::OneHot: {
      VectorXd out = VectorXd::Zero(dim);
      if (arm > 0) out[arm - 1] = 1.0;
      return out;
    }
  }
  throw ConfigError("unknown feature kind");
}

double FeatureMap::phi_max() const {
  double tau_max = 0.0;
  for (double v : treatments.values) tau_max = std::max(tau_max, std::abs(v));
  const double xnorm = context_bound * std::sqrt(static_cast<double>(dim));
  switch (kind) {
    case FeatureKind::TreatmentTimesContext:
      return tau_max * xnorm;
    case FeatureKind::TreatmentTimesContextPair:
      return tau_max * context_bound * xnorm;
    case FeatureKind::OneHot:
      return 1.0;
  }
  throw ConfigError("unknown feature kind");
}

std::string feature_kind_name(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::TreatmentTimesContext: return "treatment_times_context";
    case FeatureKind::TreatmentTimesContextPair: return "treatment_times_context_pair";
    case FeatureKind::OneHot: return "one_hot";
  }
  throw ConfigError("unknown feature kind");
}

FeatureKind feature_kind_from_name(const std::string& name) {
  if (name == "treatment_times_context") return FeatureKind::TreatmentTimesContext;
  if (name == "treatment_times_context_pair") return FeatureKind::TreatmentTimesContextPair;
  if (name == "one_hot") return FeatureKind::OneHot;
  throw ConfigError("unknown feature kind: " + name);
}

}  // namespace rwz
