#pragma once

#include <functional>
#include <span>
#include <vector>

#include "rwz/moments.hpp"
#include "rwz/types.hpp"
#include "rwz/weights.hpp"

namespace rwz {

// Ridge-regularized least squares on the monomial expansion of the input, up
// to a total degree.  Degree and coefficient order are fixed by the
// expansion, so fitted models serialize as (input_dim, degree, coef).
class PolynomialRegressor {
 public:
  PolynomialRegressor() = default;

  static PolynomialRegressor fit(std::span<const VectorXd> inputs,
                                 std::span<const double> targets, int degree,
                                 double ridge, double output_clamp);

  double predict(const VectorXd& x) const;
  bool trained() const { return trained_; }
  double in_sample_mse() const { return in_sample_mse_; }
  int input_dim() const { return input_dim_; }
  int degree() const { return degree_; }
  double output_clamp() const { return clamp_; }
  const VectorXd& coefficients() const { return coef_; }

  // Rebuilds a fitted regressor from serialized state.
  static PolynomialRegressor restore(int input_dim, int degree,
                                     VectorXd coefficients, double output_clamp,
                                     double in_sample_mse);

  // Monomial basis in graded order; exposed for tests and serialization.
  static VectorXd expand(const VectorXd& x, int degree);
  static int expansion_size(int input_dim, int degree);

 private:
  bool trained_ = false;
  int input_dim_ = 0;
  int degree_ = 0;
  double clamp_ = 1e6;
  double in_sample_mse_ = 0.0;
  VectorXd coef_;
};

struct VectorRegressor {
  std::vector<PolynomialRegressor> components;

  bool trained() const { return !components.empty(); }
  VectorXd predict(const VectorXd& x) const;
};

struct NuisanceConfig {
  int degree = 2;
  double ridge = 1e-8;
  double output_clamp = 1e6;
  // PLM mode routes g through fitted beta/kappa and the theta chain; the
  // generic mode regresses pseudo-outcomes on raw histories.
  bool plm_mode = true;
};

// History regressor input: X_1..X_j flattened, then T_1..T_{j-1} as reals.
VectorXd history_vector(int stage, std::span<const VectorXd> contexts,
                        std::span<const int> treatment_arms,
                        const TreatmentSpace& treatments);

// Prequential nuisance state.  fit_boundary is the largest episode index the
// model has seen; weights for episode i may use it only when fit_boundary < i.
struct NuisanceModel {
  int fit_boundary = 0;
  bool plm_mode = true;
  NuisanceConfig config;
  ParameterVector theta_bar;
  TreatmentSpace treatments;

  std::vector<PolynomialRegressor> g;  // generic mode; index j in 1..l
  VectorRegressor beta_hat;            // PLM mode
  PolynomialRegressor kappa_hat;
  double kappa_proxy_rms = 0.0;        // observable contamination proxy

  std::vector<double> sigma2;          // stages 0..l

  double predict_g(int stage, std::span<const VectorXd> contexts,
                   std::span<const int> treatment_arms) const;

  // g^2 + sigma2 before clipping; throws StalenessError when the model was
  // fitted on (or past) the consuming episode.
  double predict_f(int stage, std::span<const VectorXd> contexts,
                   std::span<const int> treatment_arms,
                   int consumer_episode) const;
};

// Least-squares fit of the stage-j pseudo-outcomes y - sum_{j'>=j}
// theta-bar_{j'}^T reg_{j'} on history features.
PolynomialRegressor fit_generic_g(std::span<const EpisodeRecord> episodes,
                                  std::span<const StageStack> stacks,
                                  const ParameterVector& theta_bar, int stage,
                                  const TreatmentSpace& treatments,
                                  const NuisanceConfig& config);

// Mean squared stage-j regression residual over the prefix; stage 0 uses the
// theta_0 row's residual and g = 0.
double fit_sigma(std::span<const EpisodeRecord> episodes,
                 std::span<const StageStack> stacks,
                 const ParameterVector& theta_bar,
                 const std::function<double(std::size_t)>& g_of_episode,
                 int stage);

// Regression of b_i = X_{i,2} - phi_1(X_{i,1}, T_{i,1}) on X_1.
VectorRegressor fit_plm_beta(std::span<const EpisodeRecord> episodes,
                             const FeatureMap& features,
                             const NuisanceConfig& config);

// Regression of the proxies z_i = y_i - theta-bar_l^T phi_{i,l} -
// theta-bar_{l-1}^T X_{i,l} on X_1.  proxy_rms_out reports the residual scale
// of the proxies actually used (the contamination is not assumed known).
PolynomialRegressor fit_plm_kappa(std::span<const EpisodeRecord> episodes,
                                  const FeatureMap& features,
                                  const ParameterVector& theta_bar,
                                  const NuisanceConfig& config,
                                  double* proxy_rms_out = nullptr);

// Fits the full model on a prefix: PLM mode fits beta/kappa, generic mode
// fits per-stage regressors; both then estimate the stage variances.
NuisanceModel fit_nuisance(std::span<const EpisodeRecord> episodes,
                           std::span<const StageStack> stacks,
                           const FeatureMap& features,
                           const ParameterVector& theta_bar,
                           const NuisanceConfig& config);

// Spec-shaped convenience: feasible weights for one episode straight from a
// fitted model (staleness-checked), clipping done by the weights module.
WeightMatrices feasible_weights_for(const NuisanceModel& model,
                                    const EpisodeRecord& episode,
                                    std::span<const ConditionalMoments> moments,
                                    const WeightConfig& wcfg);

}  // namespace rwz
