#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rwz/policy.hpp"
#include "rwz/rng.hpp"
#include "rwz/types.hpp"

namespace rwz {

// Bounded zero-mean exogenous noise.
enum class NoiseKind { None, Uniform, Rademacher };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::None;
  double scale = 0.0;  // uniform on [-scale, scale] or +-scale

  double variance() const;
  double bound() const { return scale; }
  double draw(Rng& rng) const;
};

// Baseline effect families; all bounded on the declared box and with means
// that are exactly integrable by tensor Gauss-Legendre quadrature.
enum class BaselineKind { Zero, Affine, QuadraticClipped, Cosine };

std::string baseline_kind_name(BaselineKind kind);
BaselineKind baseline_kind_from_name(const std::string& name);

// beta : X -> X, the nonlinear baseline effect on the first transition.
struct VectorBaseline {
  BaselineKind kind = BaselineKind::Zero;
  MatrixXd linear;   // Affine: linear * x + offset
  VectorXd offset;
  VectorXd quad;     // QuadraticClipped: quad .* x .* x + linear * x + offset
  VectorXd amp, freq, phase;  // Cosine: amp .* cos(freq .* x + phase), entrywise
  double clip = 1e6;

  VectorXd eval(const VectorXd& x) const;
  void validate(int dim) const;
};

// kappa : X -> R, the nonlinear baseline effect on the outcome.
struct ScalarBaseline {
  BaselineKind kind = BaselineKind::Zero;
  VectorXd linear;
  double offset = 0.0;
  VectorXd quad;
  double amp = 0.0;
  VectorXd freq;
  double phase = 0.0;
  double clip = 1e6;

  double eval(const VectorXd& x) const;
  void validate(int dim) const;
};

// Distribution of the initial context X_1 (bounded support).
struct InitialDist {
  enum class Kind { PointMass, UniformBox } kind = Kind::UniformBox;
  VectorXd point;
  VectorXd lo, hi;

  VectorXd draw(Rng& rng) const;
  void validate(int dim) const;
};

// Partial linear Markovian data-generating process:
//   X_1 ~ P_X
//   X_2     = phi_1(X_1, T_1) + beta(X_1) + eta_2
//   X_{j+1} = phi_j(X_{1:j}, T_{1:j}) + Gamma_{j+1} X_j + eta_{j+1}
//   y       = theta_l^T phi_l + omega^T X_l + kappa(X_1) + eps
struct PlmConfig {
  int horizon = 2;
  int dim = 1;
  FeatureMap features;
  std::vector<MatrixXd> gamma;  // Gamma_3..Gamma_l (empty when horizon == 2)
  VectorXd theta_last;          // theta (stage-l coefficient)
  VectorXd omega;               // stage-(l-1) coefficient
  VectorBaseline beta;
  ScalarBaseline kappa;
  InitialDist init;
  NoiseSpec eta;   // transition shocks (iid per coordinate)
  NoiseSpec eps;   // outcome shock
  double state_bound = 10.0;  // sup-norm box for every context

  void validate() const;

  const MatrixXd& gamma_for(int target_stage) const;  // Gamma_j, j in 3..l

  // Exact coefficient chain theta_1..theta_l:
  //   theta_l = theta_last, theta_{l-1} = omega,
  //   theta_j = Gamma_{j+2}^T theta_{j+1} for j = l-2,...,1.
  std::vector<VectorXd> theta_chain() const;

  // Residual variance sigma_j^2 = sum_{j'>j} ||theta_{j'-1}||^2 Var(eta) + Var(eps).
  double sigma_j_sq(int stage) const;

  // Conditional residual mean g_j: g_1 = theta_1^T beta(x1) + kappa(x1);
  // g_j = theta_{j-1}^T x_j + kappa(x1) for j >= 2.
  double g_value(int stage, std::span<const VectorXd> contexts) const;

  // Exact second moment f_{i,j} = g_j^2 + sigma_j^2 for j >= 1;
  // f_{i,0} = Var(g_1(X_1)) + sigma_1^2.
  double f_oracle(int stage, std::span<const VectorXd> contexts) const;

  // E[g_1(X_1)] and Var(g_1(X_1)) under P_X by tensor quadrature.
  double g1_mean() const;
  double g1_variance() const;

  // Conservative bound on |y| over the declared domain.
  double outcome_bound() const;
};

// theta_0 plus the blip coefficient chain; theta_0 comes from a seeded Monte
// Carlo rollout of the zero-treatment policy and carries its standard error.
struct TrueParameters {
  ParameterVector theta;
  double theta0_se = 0.0;
  int oracle_samples = 0;
  std::uint64_t oracle_seed = 0;
};

EpisodeRecord simulate_episode(const PlmConfig& config,
                               const PolicySnapshot& policy, Rng& rng,
                               EpisodeNoise* noise_out = nullptr);

TrueParameters derive_true_parameters(const PlmConfig& config,
                                      int oracle_samples, std::uint64_t seed);

// Treatment chooser for counterfactual rollouts.  May be stochastic (wrap a
// behavior snapshot) or deterministic (a reference policy).
using RolloutPolicy = std::function<int(
    int stage, std::span<const VectorXd> contexts,
    std::span<const int> treatment_arms, Rng& rng)>;

RolloutPolicy static_rollout(std::vector<int> arms);
RolloutPolicy snapshot_rollout(const PolicySnapshot& snapshot,
                               const FeatureMap& features);

struct McValue {
  double mean = 0.0;
  double se = 0.0;
  int samples = 0;
};

// Ground-truth Monte Carlo estimate of E[y(pi)].
McValue counterfactual_value(const PlmConfig& config, const RolloutPolicy& policy,
                             int samples, Rng& rng);

// One adaptive data-collection run: snapshot i is drawn before episode i is
// simulated, each episode on its own derived stream.
struct SimulatedRun {
  std::vector<EpisodeRecord> episodes;
  std::vector<PolicySnapshot> snapshots;
};

SimulatedRun simulate_run(const PlmConfig& config, PolicyFamily& family, int n,
                          std::uint64_t seed);

}  // namespace rwz
