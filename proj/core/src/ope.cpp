#include "rwz/ope.hpp"

namespace rwz {

int ReferencePolicy::choose(int stage, std::span<const VectorXd> contexts,
                            std::span<const int> /*treatment_arms*/) const {
  switch (kind) {
    case Kind::Always:
      return arm;
    case Kind::Threshold: {
      const VectorXd& x = contexts[static_cast<std::size_t>(stage - 1)];
      if (coordinate < 0 || coordinate >= x.size())
        throw ConfigError("reference policy coordinate out of range");
      return x[coordinate] > cutoff ? arm_above : arm_below;
    }
  }
  throw ConfigError("unknown reference policy kind");
}

std::string ReferencePolicy::id() const {
  switch (kind) {
    case Kind::Always:
      return "always:" + std::to_string(arm);
    case Kind::Threshold:
      return "threshold:x" + std::to_string(coordinate) + ">" +
             std::to_string(cutoff) + "?" + std::to_string(arm_above) + ":" +
             std::to_string(arm_below);
  }
  throw ConfigError("unknown reference policy kind");
}

ReferencePolicy always_policy(int arm) {
  ReferencePolicy pi;
  pi.kind = ReferencePolicy::Kind::Always;
  pi.arm = arm;
  return pi;
}

BlipContrast contrast_features(const EpisodeRecord& episode,
                               const ReferencePolicy& reference,
                               const FeatureMap& features) {
  const int l = episode.horizon();
  BlipContrast contrast;
  contrast.reference_id = reference.id();
  contrast.gamma.reserve(static_cast<std::size_t>(l));
  std::vector<int> arms = episode.treatments;
  for (int j = 1; j <= l; ++j) {
    const VectorXd realized = features.eval(j, episode.contexts, episode.treatments);
    const int pinned = reference.choose(j, episode.contexts, episode.treatments);
    if (pinned < 0 || pinned >= features.treatments.count)
      throw ConfigError("reference policy chose an unknown arm");
    const int saved = arms[static_cast<std::size_t>(j - 1)];
    arms[static_cast<std::size_t>(j - 1)] = pinned;
    contrast.gamma.push_back(realized - features.eval(j, episode.contexts, arms));
    arms[static_cast<std::size_t>(j - 1)] = saved;
  }
  return contrast;
}

OpeResult evaluate_policy(const EstimationInput& input,
                          const ReferencePolicy& reference, SchemeSpec scheme,
                          double level) {
  EstimationInput ope_input = input;
  ope_input.mode = MomentMode::Ope;
  ope_input.contrast = [&reference, features = input.features](
                           const EpisodeRecord& ep) {
    return contrast_features(ep, reference, *features);
  };
  scheme.nuisance.plm_mode = false;

  OpeResult result;
  result.estimate = solve(ope_input, scheme);
  VectorXd e0 = VectorXd::Zero(result.estimate.theta_hat.flat.size());
  e0[0] = 1.0;
  result.value_interval = confidence_interval(result.estimate, e0, level);
  return result;
}

}  // namespace rwz
