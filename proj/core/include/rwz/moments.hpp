#pragma once

#include <span>
#include <string>
#include <vector>

#include "rwz/features.hpp"
#include "rwz/policy.hpp"
#include "rwz/types.hpp"

namespace rwz {

enum class MomentMode { Baseline, Ope };

// Per-stage blip contrasts gamma_{i,j} = phi_j(X, T_{1:j}) - phi_j(X,
// (T_{1:j-1}, pi(history))) against a deterministic reference policy.  Built
// by ope::contrast_features; consumed by the moment machinery in Ope mode.
struct BlipContrast {
  std::vector<VectorXd> gamma;
  std::string reference_id;
};

// Stacked per-episode vectors entering the moment system, with the stage-0
// conventions phi_0 = 1, q_0 = 0 applied:
//   phi       instruments (always the feature map)
//   reg       regressors carrying theta: phi in Baseline mode, gamma in Ope
//   q         conditional means of phi
struct StageStack {
  int horizon = 0;
  int dim = 0;
  std::vector<VectorXd> phi;
  std::vector<VectorXd> reg;
  std::vector<VectorXd> q;

  int size() const { return 1 + dim * horizon; }
  VectorXd phi_stack() const;
  VectorXd q_stack() const;
};

StageStack stage_stack(const EpisodeRecord& episode, const FeatureMap& features,
                       std::span<const ConditionalMoments> moments,
                       const BlipContrast* contrast = nullptr);

// m(Z; theta) with residuals r_{i,j} = y - sum_{j' >= j} theta_{j'}^T reg_{j'}:
//   m_0 = y - sum_j theta_j^T reg_j - theta_0
//   m_j = r_{i,j} (phi_j - q_j)
struct MomentEvaluation {
  VectorXd m;
  std::vector<double> residuals;  // r_{i,1}..r_{i,l}
};

MomentEvaluation evaluate_moment(const StageStack& stack, double outcome,
                                 const ParameterVector& theta);

// Jacobian d m / d theta; blocked upper triangular.  Block (j, j') for
// 1 <= j <= j' is -(phi_j - q_j) reg_{j'}^T; row 0 is -(1, reg_1^T, ...).
MatrixXd moment_jacobian(const StageStack& stack);

// Brute-force oracle for theta under a fixed behavior policy: replaces the
// conditional expectations in the closed form
//   theta = -(sum E[J_i])^{-1} (sum E[y_i (phi_i - q_i)])
// by sample sums and solves with a full-pivot LU.  Test oracle only; does not
// share a code path with the weighted estimator.
ParameterVector closed_form_theta(std::span<const StageStack> stacks,
                                  std::span<const double> outcomes);

}  // namespace rwz
