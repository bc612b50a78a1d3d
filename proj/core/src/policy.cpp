#include "rwz/policy.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>

namespace rwz {

std::string policy_kind_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::FixedRandomized: return "fixed_randomized";
    case PolicyKind::EpsilonGreedy: return "epsilon_greedy";
    case PolicyKind::Softmax: return "softmax";
  }
  throw ConfigError("unknown policy kind");
}

PolicyKind policy_kind_from_name(const std::string& name) {
  if (name == "fixed_randomized") return PolicyKind::FixedRandomized;
  if (name == "epsilon_greedy") return PolicyKind::EpsilonGreedy;
  if (name == "softmax") return PolicyKind::Softmax;
  throw ConfigError("unknown policy kind: " + name);
}

void PolicySnapshot::validate() const {
  if (arm_count < 2) throw ConfigError("snapshot needs >= 2 arms");
  if (kind == PolicyKind::FixedRandomized) {
    if (static_cast<int>(fixed_probs.size()) != arm_count)
      throw ConfigError("fixed_probs size mismatch");
    double total = 0.0;
    for (double p : fixed_probs) {
      if (p < 0.0) throw ConfigError("negative arm probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw ConfigError("fixed_probs must sum to 1");
  } else {
    if (mix_weight < 0.0 || mix_weight > 1.0)
      throw ConfigError("mix weight outside [0,1]");
    if (kind == PolicyKind::Softmax && temperature <= 0.0)
      throw ConfigError("softmax temperature must be positive");
  }
}

std::vector<double> PolicySnapshot::probs(
    const FeatureMap& features, int stage, std::span<const VectorXd> contexts,
    std::span<const int> treatment_arms) const {
  const auto k = static_cast<std::size_t>(arm_count);
  if (kind == PolicyKind::FixedRandomized) return fixed_probs;

  // Score every arm through the running estimate.
  std::vector<double> scores(k, 0.0);
  std::vector<int> arms(treatment_arms.begin(),
                        treatment_arms.begin() + (stage - 1));
  arms.push_back(0);
  const bool scored = score_theta.flat.size() > 0 && score_theta.horizon >= stage;
  if (scored) {
    for (std::size_t a = 0; a < k; ++a) {
      arms.back() = static_cast<int>(a);
      const VectorXd phi = features.eval(stage, contexts, arms);
      scores[a] = score_theta.stage(stage).dot(phi);
    }
  }

  std::vector<double> out(k, mix_weight / static_cast<double>(arm_count));
  if (kind == PolicyKind::EpsilonGreedy) {
    std::size_t best = 0;
    for (std::size_t a = 1; a < k; ++a)
      if (scores[a] > scores[best]) best = a;
    out[best] += 1.0 - mix_weight;
  } else {
    const double smax = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    std::vector<double> w(k);
    for (std::size_t a = 0; a < k; ++a) {
      w[a] = std::exp((scores[a] - smax) / temperature);
      z += w[a];
    }
    for (std::size_t a = 0; a < k; ++a) out[a] += (1.0 - mix_weight) * w[a] / z;
  }
  return out;
}

int PolicySnapshot::sample(const FeatureMap& features, int stage,
                           std::span<const VectorXd> contexts,
                           std::span<const int> treatment_arms,
                           Rng& rng) const {
  const std::vector<double> p = probs(features, stage, contexts, treatment_arms);
  return rng.categorical(p);
}

double PolicySnapshot::min_prob() const {
  if (kind == PolicyKind::FixedRandomized)
    return *std::min_element(fixed_probs.begin(), fixed_probs.end());
  return mix_weight / static_cast<double>(arm_count);
}

ConditionalMoments conditional_moments(const PolicySnapshot& snapshot,
                                       const FeatureMap& features, int stage,
                                       std::span<const VectorXd> contexts,
                                       std::span<const int> treatment_arms) {
  const std::vector<double> p =
      snapshot.probs(features, stage, contexts, treatment_arms);
  std::vector<int> arms(treatment_arms.begin(),
                        treatment_arms.begin() + (stage - 1));
  arms.push_back(0);

  std::vector<VectorXd> phis(p.size());
  for (std::size_t a = 0; a < p.size(); ++a) {
    arms.back() = static_cast<int>(a);
    phis[a] = features.eval(stage, contexts, arms);
  }

  ConditionalMoments cm;
  cm.q = VectorXd::Zero(features.dim);
  for (std::size_t a = 0; a < p.size(); ++a) cm.q += p[a] * phis[a];
  cm.cov = MatrixXd::Zero(features.dim, features.dim);
  for (std::size_t a = 0; a < p.size(); ++a) {
    const VectorXd centered = phis[a] - cm.q;
    cm.cov += p[a] * (centered * centered.transpose());
  }

  if (features.dim == 1) {
    cm.lambda_min = cm.cov(0, 0);
  } else {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es;
    if (features.dim <= 3)
      es.computeDirect(cm.cov, Eigen::EigenvaluesOnly);
    else
      es.compute(cm.cov, Eigen::EigenvaluesOnly);
    cm.lambda_min = es.eigenvalues().minCoeff();
  }
  return cm;
}

std::vector<ConditionalMoments> stage_moments(const PolicySnapshot& snapshot,
                                              const FeatureMap& features,
                                              const EpisodeRecord& episode) {
  const int l = episode.horizon();
  std::vector<ConditionalMoments> out;
  out.reserve(static_cast<std::size_t>(l));
  for (int j = 1; j <= l; ++j)
    out.push_back(conditional_moments(snapshot, features, j, episode.contexts,
                                      episode.treatments));
  return out;
}

void PolicyFamilyConfig::validate(int /*stage_horizon*/) const {
  if (alpha < 0.0 || alpha >= 1.0) throw ConfigError("alpha must lie in [0,1)");
  if (explore_c <= 0.0 || explore_c > 1.0)
    throw ConfigError("explore_c must lie in (0,1]");
  if (cov_floor_c <= 0.0 || cov_floor_c >= 1.0)
    throw ConfigError("cov_floor_c must lie in (0,1)");
  if (refit_start < 2) throw ConfigError("refit_start must be >= 2");
  if (kind == PolicyKind::FixedRandomized && !fixed_probs.empty()) {
    double total = 0.0;
    for (double p : fixed_probs) {
      if (p < 0.0) throw ConfigError("negative arm probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw ConfigError("fixed_probs must sum to 1");
  }
}

PolicyFamily::PolicyFamily(PolicyFamilyConfig config, const FeatureMap* features,
                           RefitFn refit)
    : config_(std::move(config)),
      features_(features),
      refit_(std::move(refit)),
      running_theta_(features ? ParameterVector(features->horizon, features->dim)
                              : ParameterVector()),
      next_checkpoint_(config_.refit_start) {
  if (features_ == nullptr) throw ConfigError("policy family needs a feature map");
  config_.validate(features_->horizon);
}

PolicySnapshot PolicyFamily::next(int episode_index,
                                  std::span<const EpisodeRecord> past,
                                  std::span<const PolicySnapshot> past_snapshots) {
  if (episode_index < 1) throw ConfigError("episode index starts at 1");
  if (static_cast<int>(past.size()) != episode_index - 1)
    throw ConfigError("snapshot may only depend on episodes before it");

  if (config_.kind != PolicyKind::FixedRandomized && refit_ &&
      static_cast<int>(past.size()) >= next_checkpoint_) {
    if (auto theta = refit_(past, past_snapshots)) running_theta_ = *theta;
    while (next_checkpoint_ <= static_cast<int>(past.size()))
      next_checkpoint_ *= 2;
  }

  PolicySnapshot snap;
  snap.id = episode_index - 1;
  snap.episode = episode_index;
  snap.kind = config_.kind;
  snap.arm_count = features_->treatments.count;
  snap.alpha = config_.alpha;
  snap.explore_c = config_.explore_c;
  snap.cov_floor_c = config_.cov_floor_c;
  snap.temperature = config_.temperature;

  if (config_.kind == PolicyKind::FixedRandomized) {
    snap.fixed_probs = config_.fixed_probs;
    if (snap.fixed_probs.empty())
      snap.fixed_probs.assign(static_cast<std::size_t>(snap.arm_count),
                              1.0 / snap.arm_count);
    snap.mix_weight = 1.0;
  } else {
    snap.score_theta = running_theta_;
    snap.mix_weight = std::min(
        1.0, config_.explore_c *
                 std::pow(static_cast<double>(episode_index), -config_.alpha));
  }
  snap.validate();
  return snap;
}

FloorReport verify_exploration_floor(std::span<const PolicySnapshot> snapshots,
                                     const FeatureMap& features,
                                     std::span<const EpisodeRecord> probes) {
  FloorReport report;
  if (probes.empty()) throw ConfigError("floor audit needs probe histories");
  const int l = features.horizon;
  report.rows.resize(static_cast<std::size_t>(l));
  for (int j = 1; j <= l; ++j) {
    auto& row = report.rows[static_cast<std::size_t>(j - 1)];
    row.stage = j;
    row.min_scaled_lambda = std::numeric_limits<double>::infinity();
  }
  double c2 = 1.0;
  for (const EpisodeRecord& probe : probes) {
    const auto snap_idx = static_cast<std::size_t>(probe.policy_id);
    if (snap_idx >= snapshots.size())
      throw ConfigError("probe references unknown snapshot");
    const PolicySnapshot& snap = snapshots[snap_idx];
    c2 = snap.cov_floor_c * snap.cov_floor_c;
    const double scale =
        std::pow(static_cast<double>(snap.episode), snap.alpha);
    for (int j = 1; j <= l; ++j) {
      const ConditionalMoments cm = conditional_moments(
          snap, features, j, probe.contexts, probe.treatments);
      auto& row = report.rows[static_cast<std::size_t>(j - 1)];
      const double scaled = cm.lambda_min * scale;
      if (scaled < row.min_scaled_lambda) {
        row.min_scaled_lambda = scaled;
        row.worst_episode = snap.episode;
      }
    }
  }
  report.c_squared = c2;
  for (const auto& row : report.rows)
    if (row.min_scaled_lambda < c2) report.ok = false;
  return report;
}

}  // namespace rwz
