#include "rwz/nuisance.hpp"

#include <Eigen/Cholesky>
#include <cmath>

namespace rwz {
namespace {

// Enumerates exponent vectors with total degree <= degree in graded
// lexicographic order, invoking fn on each monomial value.
void for_each_monomial(const VectorXd& x, int degree,
                       const std::function<void(double)>& fn) {
  const int p = static_cast<int>(x.size());
  std::vector<int> expo(static_cast<std::size_t>(p), 0);
  std::function<void(int, int, double)> rec = [&](int pos, int remaining,
                                                  double value) {
    if (pos == p) {
      fn(value);
      return;
    }
    double v = value;
    for (int e = 0; e <= remaining; ++e) {
      rec(pos + 1, remaining - e, v);
      v *= x[pos];
    }
  };
  rec(0, degree, 1.0);
}

double clip_to(double v, double bound) {
  return std::max(-bound, std::min(bound, v));
}

}  // namespace

int PolynomialRegressor::expansion_size(int input_dim, int degree) {
  // C(input_dim + degree, degree)
  long long num = 1;
  for (int k = 1; k <= degree; ++k)
    num = num * (input_dim + k) / k;
  return static_cast<int>(num);
}

VectorXd PolynomialRegressor::expand(const VectorXd& x, int degree) {
  VectorXd out(expansion_size(static_cast<int>(x.size()), degree));
  Eigen::Index idx = 0;
  for_each_monomial(x, degree, [&](double v) { out[idx++] = v; });
  return out;
}

PolynomialRegressor PolynomialRegressor::fit(std::span<const VectorXd> inputs,
                                             std::span<const double> targets,
                                             int degree, double ridge,
                                             double output_clamp) {
  if (inputs.empty() || inputs.size() != targets.size())
    throw ConfigError("regression needs matching inputs and targets");
  if (degree < 0) throw ConfigError("polynomial degree must be >= 0");

  const int p = static_cast<int>(inputs[0].size());
  const int m = expansion_size(p, degree);
  if (static_cast<int>(inputs.size()) < m)
    throw UnderdeterminedFitError("fewer episodes than regression parameters");

  MatrixXd gram = MatrixXd::Zero(m, m);
  VectorXd rhs = VectorXd::Zero(m);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const VectorXd row = expand(inputs[i], degree);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(row);
    rhs += targets[i] * row;
  }
  gram = gram.selfadjointView<Eigen::Lower>();
  gram.diagonal().array() += ridge;

  PolynomialRegressor reg;
  reg.trained_ = true;
  reg.input_dim_ = p;
  reg.degree_ = degree;
  reg.clamp_ = output_clamp;
  reg.coef_ = gram.ldlt().solve(rhs);

  double mse = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const double err = targets[i] - reg.predict(inputs[i]);
    mse += err * err;
  }
  reg.in_sample_mse_ = mse / static_cast<double>(inputs.size());
  return reg;
}

PolynomialRegressor PolynomialRegressor::restore(int input_dim, int degree,
                                                 VectorXd coefficients,
                                                 double output_clamp,
                                                 double in_sample_mse) {
  if (coefficients.size() != expansion_size(input_dim, degree))
    throw ConfigError("restored coefficient count does not match the basis");
  PolynomialRegressor reg;
  reg.trained_ = true;
  reg.input_dim_ = input_dim;
  reg.degree_ = degree;
  reg.clamp_ = output_clamp;
  reg.in_sample_mse_ = in_sample_mse;
  reg.coef_ = std::move(coefficients);
  return reg;
}

double PolynomialRegressor::predict(const VectorXd& x) const {
  if (!trained_) return 0.0;
  if (x.size() != input_dim_) throw ConfigError("regressor input dim mismatch");
  return clip_to(coef_.dot(expand(x, degree_)), clamp_);
}

VectorXd VectorRegressor::predict(const VectorXd& x) const {
  if (!trained()) return VectorXd::Zero(x.size());
  VectorXd out(components.size());
  for (std::size_t k = 0; k < components.size(); ++k)
    out[static_cast<Eigen::Index>(k)] = components[k].predict(x);
  return out;
}

VectorXd history_vector(int stage, std::span<const VectorXd> contexts,
                        std::span<const int> treatment_arms,
                        const TreatmentSpace& treatments) {
  if (stage < 1) throw ConfigError("history stage must be >= 1");
  const int d = static_cast<int>(contexts[0].size());
  VectorXd h(stage * d + stage - 1);
  for (int j = 0; j < stage; ++j)
    h.segment(j * d, d) = contexts[static_cast<std::size_t>(j)];
  for (int j = 0; j + 1 < stage; ++j)
    h[stage * d + j] = treatments.value(treatment_arms[static_cast<std::size_t>(j)]);
  return h;
}

double NuisanceModel::predict_g(int stage, std::span<const VectorXd> contexts,
                                std::span<const int> treatment_arms) const {
  if (stage == 0) return 0.0;
  if (plm_mode) {
    const VectorXd& x1 = contexts[0];
    const double kap = kappa_hat.predict(x1);
    if (stage == 1) {
      if (theta_bar.flat.size() == 0) return 0.0;
      return theta_bar.stage(1).dot(beta_hat.predict(x1)) + kap;
    }
    if (theta_bar.flat.size() == 0) return 0.0;
    return theta_bar.stage(stage - 1).dot(
               contexts[static_cast<std::size_t>(stage - 1)]) +
           kap;
  }
  if (stage >= static_cast<int>(g.size()) ||
      !g[static_cast<std::size_t>(stage)].trained())
    return 0.0;
  const VectorXd h = history_vector(stage, contexts, treatment_arms, treatments);
  return g[static_cast<std::size_t>(stage)].predict(h);
}

double NuisanceModel::predict_f(int stage, std::span<const VectorXd> contexts,
                                std::span<const int> treatment_arms,
                                int consumer_episode) const {
  if (fit_boundary >= consumer_episode)
    throw StalenessError("nuisance model fitted on episode " +
                         std::to_string(fit_boundary) +
                         " consulted for episode " +
                         std::to_string(consumer_episode));
  const double gval = predict_g(stage, contexts, treatment_arms);
  const double s2 =
      sigma2.empty() ? 0.0 : sigma2[static_cast<std::size_t>(stage)];
  return gval * gval + s2;
}

PolynomialRegressor fit_generic_g(std::span<const EpisodeRecord> episodes,
                                  std::span<const StageStack> stacks,
                                  const ParameterVector& theta_bar, int stage,
                                  const TreatmentSpace& treatments,
                                  const NuisanceConfig& config) {
  if (episodes.empty() || episodes.size() != stacks.size())
    throw ConfigError("fit_generic_g needs matching episodes and stacks");
  const int l = stacks[0].horizon;
  if (stage < 1 || stage > l) throw ConfigError("g stage out of range");

  std::vector<VectorXd> inputs;
  std::vector<double> targets;
  inputs.reserve(episodes.size());
  targets.reserve(episodes.size());
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    double u = episodes[i].outcome;
    for (int jp = stage; jp <= l; ++jp)
      u -= theta_bar.stage(jp).dot(stacks[i].reg[static_cast<std::size_t>(jp - 1)]);
    targets.push_back(u);
    inputs.push_back(history_vector(stage, episodes[i].contexts,
                                    episodes[i].treatments, treatments));
  }
  return PolynomialRegressor::fit(inputs, targets, config.degree, config.ridge,
                                  config.output_clamp);
}

double fit_sigma(std::span<const EpisodeRecord> episodes,
                 std::span<const StageStack> stacks,
                 const ParameterVector& theta_bar,
                 const std::function<double(std::size_t)>& g_of_episode,
                 int stage) {
  if (episodes.empty()) throw ConfigError("fit_sigma needs episodes");
  const int l = stacks[0].horizon;
  double total = 0.0;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    double u = episodes[i].outcome;
    const int first = std::max(stage, 1);
    for (int jp = first; jp <= l; ++jp)
      u -= theta_bar.stage(jp).dot(stacks[i].reg[static_cast<std::size_t>(jp - 1)]);
    if (stage == 0) u -= theta_bar.theta0();
    const double resid = u - g_of_episode(i);
    total += resid * resid;
  }
  return std::max(0.0, total / static_cast<double>(episodes.size()));
}

VectorRegressor fit_plm_beta(std::span<const EpisodeRecord> episodes,
                             const FeatureMap& features,
                             const NuisanceConfig& config) {
  if (episodes.empty()) throw ConfigError("fit_plm_beta needs episodes");
  if (episodes[0].horizon() < 2)
    throw ConfigError("beta estimation needs horizon >= 2");
  const int d = features.dim;

  std::vector<VectorXd> inputs;
  std::vector<VectorXd> bs;
  inputs.reserve(episodes.size());
  bs.reserve(episodes.size());
  for (const EpisodeRecord& ep : episodes) {
    inputs.push_back(ep.contexts[0]);
    bs.push_back(ep.contexts[1] -
                 features.eval(1, ep.contexts, ep.treatments));
  }

  VectorRegressor out;
  out.components.reserve(static_cast<std::size_t>(d));
  std::vector<double> targets(episodes.size());
  for (int k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < bs.size(); ++i) targets[i] = bs[i][k];
    out.components.push_back(PolynomialRegressor::fit(
        inputs, targets, config.degree, config.ridge, config.output_clamp));
  }
  return out;
}

PolynomialRegressor fit_plm_kappa(std::span<const EpisodeRecord> episodes,
                                  const FeatureMap& features,
                                  const ParameterVector& theta_bar,
                                  const NuisanceConfig& config,
                                  double* proxy_rms_out) {
  if (episodes.empty()) throw ConfigError("fit_plm_kappa needs episodes");
  const int l = episodes[0].horizon();
  if (theta_bar.horizon != l) throw ConfigError("theta_bar horizon mismatch");

  std::vector<VectorXd> inputs;
  std::vector<double> proxies;
  inputs.reserve(episodes.size());
  proxies.reserve(episodes.size());
  for (const EpisodeRecord& ep : episodes) {
    const VectorXd phi_l = features.eval(l, ep.contexts, ep.treatments);
    const double z = ep.outcome - theta_bar.stage(l).dot(phi_l) -
                     (l >= 2 ? theta_bar.stage(l - 1).dot(ep.contexts.back())
                             : 0.0);
    inputs.push_back(ep.contexts[0]);
    proxies.push_back(z);
  }
  PolynomialRegressor reg = PolynomialRegressor::fit(
      inputs, proxies, config.degree, config.ridge, config.output_clamp);
  if (proxy_rms_out) *proxy_rms_out = std::sqrt(reg.in_sample_mse());
  return reg;
}

NuisanceModel fit_nuisance(std::span<const EpisodeRecord> episodes,
                           std::span<const StageStack> stacks,
                           const FeatureMap& features,
                           const ParameterVector& theta_bar,
                           const NuisanceConfig& config) {
  if (episodes.empty() || episodes.size() != stacks.size())
    throw ConfigError("fit_nuisance needs matching episodes and stacks");
  const int l = stacks[0].horizon;

  NuisanceModel model;
  model.fit_boundary = episodes.back().index;
  model.plm_mode = config.plm_mode;
  model.config = config;
  model.theta_bar = theta_bar;
  model.treatments = features.treatments;

  if (config.plm_mode) {
    model.beta_hat = fit_plm_beta(episodes, features, config);
    model.kappa_hat = fit_plm_kappa(episodes, features, theta_bar, config,
                                    &model.kappa_proxy_rms);
  } else {
    model.g.resize(static_cast<std::size_t>(l) + 1);
    for (int j = 1; j <= l; ++j)
      model.g[static_cast<std::size_t>(j)] = fit_generic_g(
          episodes, stacks, theta_bar, j, features.treatments, config);
  }

  model.sigma2.resize(static_cast<std::size_t>(l) + 1);
  for (int j = 0; j <= l; ++j) {
    auto g_at = [&](std::size_t i) {
      return model.predict_g(j, episodes[i].contexts, episodes[i].treatments);
    };
    model.sigma2[static_cast<std::size_t>(j)] =
        fit_sigma(episodes, stacks, theta_bar, g_at, j);
  }
  return model;
}

WeightMatrices feasible_weights_for(const NuisanceModel& model,
                                    const EpisodeRecord& episode,
                                    std::span<const ConditionalMoments> moments,
                                    const WeightConfig& wcfg) {
  const int l = episode.horizon();
  std::vector<double> f_raw(static_cast<std::size_t>(l) + 1);
  for (int j = 0; j <= l; ++j)
    f_raw[static_cast<std::size_t>(j)] = model.predict_f(
        j, episode.contexts, episode.treatments, episode.index);
  return feasible_weights(moments, f_raw, wcfg);
}

}  // namespace rwz
