#pragma once

#include <span>
#include <string>
#include <vector>

#include "rwz/policy.hpp"
#include "rwz/types.hpp"

namespace rwz {

enum class WeightScheme { Uniform, Consistent, Oracle, Feasible };

std::string weight_scheme_name(WeightScheme scheme);
WeightScheme weight_scheme_from_name(const std::string& name);

// Bounds and tolerances shared by the weighting schemes.  sigma2_floor must
// lower-bound the residual second moment f and m2_cap must upper-bound it;
// feasible estimates are clipped into [sigma2_floor, m2_cap].
struct WeightConfig {
  double sigma2_floor = 0.01;
  double m2_cap = 100.0;
  double eig_tol = 1e-12;

  double m() const;
  void validate() const;
};

// Block-diagonal weighting H_i = diag{h_0, h_1, ..., h_l} with scalar h_0 and
// d x d stage blocks.  Blocks are measurable from the episode's snapshot and
// the stage-(j-1) history only; nothing here ever sees the outcome.
struct WeightMatrices {
  WeightScheme scheme = WeightScheme::Uniform;
  double h0 = 1.0;
  std::vector<MatrixXd> blocks;

  int horizon() const { return static_cast<int>(blocks.size()); }

  // H v for a stacked (1 + dl)-vector.
  VectorXd apply(const VectorXd& stacked) const;
  // H J, scaling the block rows of a (1 + dl) x (1 + dl) matrix.
  MatrixXd apply_rows(const MatrixXd& mat) const;
};

// Symmetric inverse square root by eigendecomposition.  Requires A symmetric
// within 1e-10; any eigenvalue <= tol raises NearSingularError carrying the
// smallest eigenvalue (the exploration-floor diagnostic).
MatrixXd inv_sqrt(const MatrixXd& sym, double tol);

WeightMatrices uniform_weights(int horizon, int dim);

// h_0 = 1, h_j = Cov_{i,j-1}(phi_{i,j})^{-1/2}.
WeightMatrices consistent_weights(std::span<const ConditionalMoments> moments,
                                  const WeightConfig& config);

// h_j = f_j^{-1/2} Cov^{-1/2} with ground-truth f; f[0] weights the theta_0
// row as f_0^{-1/2}.  f below the configured floor is a misconfiguration.
WeightMatrices oracle_weights(std::span<const ConditionalMoments> moments,
                              std::span<const double> f_true,
                              const WeightConfig& config);

// Same shape with plug-in f, clipped into [sigma2_floor, m2_cap] here.
WeightMatrices feasible_weights(std::span<const ConditionalMoments> moments,
                                std::span<const double> f_hat_raw,
                                const WeightConfig& config);

}  // namespace rwz
