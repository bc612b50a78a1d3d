#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rwz/features.hpp"
#include "rwz/rng.hpp"
#include "rwz/types.hpp"

namespace rwz {

enum class PolicyKind { FixedRandomized, EpsilonGreedy, Softmax };

std::string policy_kind_name(PolicyKind kind);
PolicyKind policy_kind_from_name(const std::string& name);

// Behavior policy in force for one episode.  The snapshot is a pure value:
// given the stage history it yields an exact probability vector over the
// treatment arms, so estimation can recompute conditional feature moments
// from logs alone.
//
// Greedy and softmax snapshots score arm tau at stage j by
// score_theta_j^T phi_j(X_{1:j}, (T_{1:j-1}, tau)) and mix the resulting
// choice with the uniform distribution at weight mix_weight.
struct PolicySnapshot {
  int id = 0;
  int episode = 1;
  PolicyKind kind = PolicyKind::FixedRandomized;
  int arm_count = 2;

  std::vector<double> fixed_probs;   // FixedRandomized
  ParameterVector score_theta;       // EpsilonGreedy / Softmax
  double mix_weight = 1.0;           // uniform mixing weight w_i
  double temperature = 1.0;          // Softmax

  // Declared exploration metadata (Assumption-4 style): decay exponent alpha,
  // per-arm floor constant explore_c, and the covariance floor constant c
  // consumed by the estimator's eigenvalue events.
  double alpha = 0.0;
  double explore_c = 0.05;
  double cov_floor_c = 0.05;

  std::vector<double> probs(const FeatureMap& features, int stage,
                            std::span<const VectorXd> contexts,
                            std::span<const int> treatment_arms) const;

  int sample(const FeatureMap& features, int stage,
             std::span<const VectorXd> contexts,
             std::span<const int> treatment_arms, Rng& rng) const;

  // Configured lower bound on any arm probability for this episode.
  double min_prob() const;

  void validate() const;
};

// Exact conditional feature moments q_{i,j} and Cov_{i,j-1}(phi_{i,j}) under
// the recorded snapshot, computed by enumeration over the finite arm set.
struct ConditionalMoments {
  VectorXd q;
  MatrixXd cov;
  double lambda_min = 0.0;
};

ConditionalMoments conditional_moments(const PolicySnapshot& snapshot,
                                       const FeatureMap& features, int stage,
                                       std::span<const VectorXd> contexts,
                                       std::span<const int> treatment_arms);

// Moments for every stage of a recorded episode.
std::vector<ConditionalMoments> stage_moments(const PolicySnapshot& snapshot,
                                              const FeatureMap& features,
                                              const EpisodeRecord& episode);

struct PolicyFamilyConfig {
  PolicyKind kind = PolicyKind::FixedRandomized;
  double alpha = 0.0;
  double explore_c = 0.05;
  double cov_floor_c = 0.05;
  double temperature = 1.0;
  std::vector<double> fixed_probs;  // FixedRandomized; default uniform
  // Running-estimate refits happen at episode counts {2^k : 2^k >= refit_start}.
  int refit_start = 16;

  void validate(int stage_horizon) const;
};

// Refits the running estimate from the episodes observed so far.  Returns
// nullopt to keep the previous estimate (e.g. eigenvalue event failed).
using RefitFn = std::function<std::optional<ParameterVector>(
    std::span<const EpisodeRecord>, std::span<const PolicySnapshot>)>;

// Sequence of behavior snapshots.  Snapshot i is built from episodes
// 1..i-1 only; the construction order is the measurability guarantee.
class PolicyFamily {
 public:
  PolicyFamily(PolicyFamilyConfig config, const FeatureMap* features,
               RefitFn refit = nullptr);

  // past must hold exactly the episodes and snapshots of indices 1..i-1.
  PolicySnapshot next(int episode_index, std::span<const EpisodeRecord> past,
                      std::span<const PolicySnapshot> past_snapshots);

  const PolicyFamilyConfig& config() const { return config_; }

 private:
  PolicyFamilyConfig config_;
  const FeatureMap* features_;
  RefitFn refit_;
  ParameterVector running_theta_;
  int next_checkpoint_;
};

// Empirical audit of the declared exploration floor: reports, per stage, the
// minimum over probe histories of lambda_min(Cov_{i,j-1}) * i^alpha and flags
// stages that dip below c^2.
struct FloorReport {
  struct StageRow {
    int stage = 0;
    double min_scaled_lambda = 0.0;
    int worst_episode = 0;
  };
  std::vector<StageRow> rows;
  double c_squared = 0.0;
  bool ok = true;
};

FloorReport verify_exploration_floor(std::span<const PolicySnapshot> snapshots,
                                     const FeatureMap& features,
                                     std::span<const EpisodeRecord> probes);

}  // namespace rwz
