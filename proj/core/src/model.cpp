#include "rwz/model.hpp"

#include <algorithm>
#include <cmath>

namespace rwz {
namespace {

// 32-point Gauss-Legendre nodes/weights on [-1, 1], positive half; mirrored
// at use.  Exact for polynomials up to degree 63.
constexpr int kHalfNodes = 16;
constexpr double kGlNode[kHalfNodes] = {
    0.0483076656877383162348126, 0.1444719615827964934851864,
    0.2392873622521370745446032, 0.3318686022821276497799168,
    0.4213512761306353453641194, 0.5068999089322293900237475,
    0.5877157572407623290407455, 0.6630442669302152009751152,
    0.7321821187402896803874267, 0.7944837959679424069630973,
    0.8493676137325699701336930, 0.8963211557660521239653072,
    0.9349060759377396891709191, 0.9647622555875064307738119,
    0.9856115115452683354001750, 0.9972638618494815635449811};
constexpr double kGlWeight[kHalfNodes] = {
    0.0965400885147278005667648, 0.0956387200792748594190820,
    0.0938443990808045656391802, 0.0911738786957638847128686,
    0.0876520930044038111427715, 0.0833119242269467552221991,
    0.0781938957870703064717409, 0.0723457941088485062253994,
    0.0658222227763618468376501, 0.0586840934785355471452836,
    0.0509980592623761761961632, 0.0428358980222266806568786,
    0.0342738629130214331026877, 0.0253920653092620594557526,
    0.0162743947309056706051706, 0.0070186100094700966004071};

// Integrates fn over a box with respect to the uniform density.
double box_average(const VectorXd& lo, const VectorXd& hi,
                   const std::function<double(const VectorXd&)>& fn) {
  const int d = static_cast<int>(lo.size());
  if (d > 3) throw ConfigError("quadrature supports dim <= 3");
  std::vector<double> nodes, weights;
  nodes.reserve(2 * kHalfNodes);
  weights.reserve(2 * kHalfNodes);
  for (int i = kHalfNodes - 1; i >= 0; --i) {
    nodes.push_back(-kGlNode[i]);
    weights.push_back(kGlWeight[i]);
  }
  for (int i = 0; i < kHalfNodes; ++i) {
    nodes.push_back(kGlNode[i]);
    weights.push_back(kGlWeight[i]);
  }
  const int m = static_cast<int>(nodes.size());
  VectorXd x(d);
  double total = 0.0;
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  while (true) {
    double w = 1.0;
    for (int k = 0; k < d; ++k) {
      const double t = nodes[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
      x[k] = 0.5 * (lo[k] + hi[k]) + 0.5 * (hi[k] - lo[k]) * t;
      w *= 0.5 * weights[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
    }
    total += w * fn(x);
    int k = 0;
    for (; k < d; ++k) {
      if (++idx[static_cast<std::size_t>(k)] < m) break;
      idx[static_cast<std::size_t>(k)] = 0;
    }
    if (k == d) break;
  }
  return total;
}

double clip_to(double v, double bound) {
  return std::max(-bound, std::min(bound, v));
}

}  // namespace

double NoiseSpec::variance() const {
  switch (kind) {
    case NoiseKind::None: return 0.0;
    case NoiseKind::Uniform: return scale * scale / 3.0;
    case NoiseKind::Rademacher: return scale * scale;
  }
  throw ConfigError("unknown noise kind");
}

double NoiseSpec::draw(Rng& rng) const {
  switch (kind) {
    case NoiseKind::None: return 0.0;
    case NoiseKind::Uniform: return rng.uniform(-scale, scale);
    case NoiseKind::Rademacher: return rng.rademacher(scale);
  }
  throw ConfigError("unknown noise kind");
}

std::string baseline_kind_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::Zero: return "zero";
    case BaselineKind::Affine: return "affine";
    case BaselineKind::QuadraticClipped: return "quadratic_clipped";
    case BaselineKind::Cosine: return "cosine";
  }
  throw ConfigError("unknown baseline kind");
}

BaselineKind baseline_kind_from_name(const std::string& name) {
  if (name == "zero") return BaselineKind::Zero;
  if (name == "affine") return BaselineKind::Affine;
  if (name == "quadratic_clipped") return BaselineKind::QuadraticClipped;
  if (name == "cosine") return BaselineKind::Cosine;
  throw ConfigError("unknown baseline kind: " + name);
}

VectorXd VectorBaseline::eval(const VectorXd& x) const {
  const auto d = x.size();
  switch (kind) {
    case BaselineKind::Zero:
      return VectorXd::Zero(d);
    case BaselineKind::Affine:
      return linear * x + offset;
    case BaselineKind::QuadraticClipped: {
      VectorXd v = quad.cwiseProduct(x.cwiseProduct(x)) + linear * x + offset;
      for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = clip_to(v[k], clip);
      return v;
    }
    case BaselineKind::Cosine: {
      VectorXd v(d);
      for (Eigen::Index k = 0; k < d; ++k)
        v[k] = amp[k] * std::cos(freq[k] * x[k] + phase[k]);
      return v;
    }
  }
  throw ConfigError("unknown baseline kind");
}

void VectorBaseline::validate(int dim) const {
  switch (kind) {
    case BaselineKind::Zero:
      return;
    case BaselineKind::Affine:
      if (linear.rows() != dim || linear.cols() != dim || offset.size() != dim)
        throw ConfigError("affine beta dimension mismatch");
      return;
    case BaselineKind::QuadraticClipped:
      if (quad.size() != dim || linear.rows() != dim || linear.cols() != dim ||
          offset.size() != dim)
        throw ConfigError("quadratic beta dimension mismatch");
      if (clip <= 0.0) throw ConfigError("beta clip must be positive");
      return;
    case BaselineKind::Cosine:
      if (amp.size() != dim || freq.size() != dim || phase.size() != dim)
        throw ConfigError("cosine beta dimension mismatch");
      return;
  }
  throw ConfigError("unknown baseline kind");
}

double ScalarBaseline::eval(const VectorXd& x) const {
  switch (kind) {
    case BaselineKind::Zero:
      return 0.0;
    case BaselineKind::Affine:
      return linear.dot(x) + offset;
    case BaselineKind::QuadraticClipped:
      return clip_to(quad.dot(x.cwiseProduct(x)) + linear.dot(x) + offset, clip);
    case BaselineKind::Cosine:
      return amp * std::cos(freq.dot(x) + phase);
  }
  throw ConfigError("unknown baseline kind");
}

void ScalarBaseline::validate(int dim) const {
  switch (kind) {
    case BaselineKind::Zero:
      return;
    case BaselineKind::Affine:
      if (linear.size() != dim) throw ConfigError("affine kappa dimension mismatch");
      return;
    case BaselineKind::QuadraticClipped:
      if (quad.size() != dim || linear.size() != dim)
        throw ConfigError("quadratic kappa dimension mismatch");
      if (clip <= 0.0) throw ConfigError("kappa clip must be positive");
      return;
    case BaselineKind::Cosine:
      if (freq.size() != dim) throw ConfigError("cosine kappa dimension mismatch");
      return;
  }
  throw ConfigError("unknown baseline kind");
}

VectorXd InitialDist::draw(Rng& rng) const {
  if (kind == Kind::PointMass) return point;
  VectorXd x(lo.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = rng.uniform(lo[k], hi[k]);
  return x;
}

void InitialDist::validate(int dim) const {
  if (kind == Kind::PointMass) {
    if (point.size() != dim) throw ConfigError("initial point dimension mismatch");
    return;
  }
  if (lo.size() != dim || hi.size() != dim)
    throw ConfigError("initial box dimension mismatch");
  for (int k = 0; k < dim; ++k)
    if (!(lo[k] < hi[k])) throw ConfigError("initial box must have lo < hi");
}

void PlmConfig::validate() const {
  if (horizon < 2) throw ConfigError("partial linear model needs horizon >= 2");
  if (dim < 1) throw ConfigError("dim must be >= 1");
  features.validate();
  if (features.horizon != horizon || features.dim != dim)
    throw ConfigError("feature map shape must match the model");
  if (theta_last.size() != dim || omega.size() != dim)
    throw ConfigError("theta/omega dimension mismatch");
  const int needed = std::max(0, horizon - 2);
  if (static_cast<int>(gamma.size()) < needed)
    throw ConfigError("need transition matrices Gamma_3..Gamma_l");
  for (const MatrixXd& g : gamma)
    if (g.rows() != dim || g.cols() != dim)
      throw ConfigError("Gamma dimension mismatch");
  beta.validate(dim);
  kappa.validate(dim);
  init.validate(dim);
  if (state_bound <= 0.0) throw ConfigError("state bound must be positive");
}

const MatrixXd& PlmConfig::gamma_for(int target_stage) const {
  if (target_stage < 3 || target_stage > horizon)
    throw ConfigError("Gamma index out of range");
  return gamma[static_cast<std::size_t>(target_stage - 3)];
}

std::vector<VectorXd> PlmConfig::theta_chain() const {
  std::vector<VectorXd> chain(static_cast<std::size_t>(horizon));
  chain[static_cast<std::size_t>(horizon - 1)] = theta_last;
  if (horizon >= 2) chain[static_cast<std::size_t>(horizon - 2)] = omega;
  for (int j = horizon - 2; j >= 1; --j)
    chain[static_cast<std::size_t>(j - 1)] =
        gamma_for(j + 2).transpose() * chain[static_cast<std::size_t>(j)];
  return chain;
}

double PlmConfig::sigma_j_sq(int stage) const {
  if (stage < 1 || stage > horizon) throw ConfigError("sigma stage out of range");
  const auto chain = theta_chain();
  double total = eps.variance();
  for (int jp = stage + 1; jp <= horizon; ++jp)
    total += chain[static_cast<std::size_t>(jp - 2)].squaredNorm() * eta.variance();
  return total;
}

double PlmConfig::g_value(int stage, std::span<const VectorXd> contexts) const {
  if (stage < 1 || stage > horizon) throw ConfigError("g stage out of range");
  const auto chain = theta_chain();
  const VectorXd& x1 = contexts[0];
  if (stage == 1)
    return chain[0].dot(beta.eval(x1)) + kappa.eval(x1);
  return chain[static_cast<std::size_t>(stage - 2)].dot(
             contexts[static_cast<std::size_t>(stage - 1)]) +
         kappa.eval(x1);
}

double PlmConfig::f_oracle(int stage, std::span<const VectorXd> contexts) const {
  if (stage == 0) return g1_variance() + sigma_j_sq(1);
  const double g = g_value(stage, contexts);
  return g * g + sigma_j_sq(stage);
}

double PlmConfig::g1_mean() const {
  const auto chain = theta_chain();
  auto g1 = [&](const VectorXd& x) {
    return chain[0].dot(beta.eval(x)) + kappa.eval(x);
  };
  if (init.kind == InitialDist::Kind::PointMass) return g1(init.point);
  return box_average(init.lo, init.hi, g1);
}

double PlmConfig::g1_variance() const {
  const auto chain = theta_chain();
  auto g1 = [&](const VectorXd& x) {
    return chain[0].dot(beta.eval(x)) + kappa.eval(x);
  };
  if (init.kind == InitialDist::Kind::PointMass) return 0.0;
  const double m = box_average(init.lo, init.hi, g1);
  const double m2 = box_average(init.lo, init.hi, [&](const VectorXd& x) {
    const double v = g1(x);
    return v * v;
  });
  return std::max(0.0, m2 - m * m);
}

double PlmConfig::outcome_bound() const {
  const auto chain = theta_chain();
  const double xnorm = state_bound * std::sqrt(static_cast<double>(dim));
  double kappa_max = std::abs(kappa.offset) + std::abs(kappa.amp);
  if (kappa.kind == BaselineKind::Affine || kappa.kind == BaselineKind::QuadraticClipped)
    kappa_max = std::min(kappa.clip,
                         std::abs(kappa.offset) + kappa.linear.cwiseAbs().sum() * state_bound +
                             (kappa.quad.size() ? kappa.quad.cwiseAbs().sum() * state_bound * state_bound
                                                : 0.0));
  return chain.back().norm() * features.phi_max() + omega.norm() * xnorm +
         kappa_max + eps.bound();
}

EpisodeRecord simulate_episode(const PlmConfig& config,
                               const PolicySnapshot& policy, Rng& rng,
                               EpisodeNoise* noise_out) {
  if (policy.arm_count != config.features.treatments.count)
    throw ConfigError("policy arm count does not match the model");
  const int l = config.horizon;

  EpisodeRecord ep;
  ep.index = policy.episode;
  ep.policy_id = policy.id;
  ep.contexts.reserve(static_cast<std::size_t>(l));
  ep.treatments.reserve(static_cast<std::size_t>(l));
  if (noise_out) {
    noise_out->eta.clear();
    noise_out->eta.reserve(static_cast<std::size_t>(l - 1));
  }

  auto check_box = [&](const VectorXd& x, int stage) {
    if (x.cwiseAbs().maxCoeff() > config.state_bound)
      throw DomainEscapeError("context left the declared box at stage " +
                              std::to_string(stage));
  };

  VectorXd x = config.init.draw(rng);
  check_box(x, 1);
  ep.contexts.push_back(x);

  for (int j = 1; j <= l; ++j) {
    const int arm =
        policy.sample(config.features, j, ep.contexts, ep.treatments, rng);
    ep.treatments.push_back(arm);
    if (j == l) break;

    VectorXd shock(config.dim);
    for (int k = 0; k < config.dim; ++k) shock[k] = config.eta.draw(rng);
    if (noise_out) noise_out->eta.push_back(shock);

    const VectorXd phi =
        config.features.eval(j, ep.contexts, ep.treatments);
    VectorXd next = phi + shock;
    if (j == 1)
      next += config.beta.eval(ep.contexts[0]);
    else
      next += config.gamma_for(j + 1) * ep.contexts.back();
    check_box(next, j + 1);
    ep.contexts.push_back(std::move(next));
  }

  const double eps_draw = config.eps.draw(rng);
  if (noise_out) noise_out->eps = eps_draw;
  const VectorXd phi_l = config.features.eval(l, ep.contexts, ep.treatments);
  ep.outcome = config.theta_last.dot(phi_l) + config.omega.dot(ep.contexts.back()) +
               config.kappa.eval(ep.contexts[0]) + eps_draw;
  return ep;
}

TrueParameters derive_true_parameters(const PlmConfig& config,
                                      int oracle_samples, std::uint64_t seed) {
  config.validate();
  if (oracle_samples < 10000)
    throw ConfigError("theta_0 oracle needs at least 1e4 samples");

  TrueParameters out;
  out.theta = ParameterVector(config.horizon, config.dim);
  const auto chain = config.theta_chain();
  for (int j = 1; j <= config.horizon; ++j)
    out.theta.stage(j) = chain[static_cast<std::size_t>(j - 1)];

  Rng rng(seed);
  const McValue v = counterfactual_value(
      config, static_rollout(std::vector<int>(static_cast<std::size_t>(config.horizon), 0)),
      oracle_samples, rng);
  out.theta.theta0() = v.mean;
  out.theta0_se = v.se;
  out.oracle_samples = oracle_samples;
  out.oracle_seed = seed;
  return out;
}

RolloutPolicy static_rollout(std::vector<int> arms) {
  return [arms = std::move(arms)](int stage, std::span<const VectorXd>,
                                  std::span<const int>, Rng&) {
    return arms[static_cast<std::size_t>(stage - 1)];
  };
}

RolloutPolicy snapshot_rollout(const PolicySnapshot& snapshot,
                               const FeatureMap& features) {
  return [&snapshot, &features](int stage, std::span<const VectorXd> contexts,
                                std::span<const int> arms, Rng& rng) {
    return snapshot.sample(features, stage, contexts, arms, rng);
  };
}

SimulatedRun simulate_run(const PlmConfig& config, PolicyFamily& family, int n,
                          std::uint64_t seed) {
  config.validate();
  if (n < 1) throw ConfigError("simulate_run needs n >= 1");
  SimulatedRun run;
  run.episodes.reserve(static_cast<std::size_t>(n));
  run.snapshots.reserve(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) {
    run.snapshots.push_back(family.next(i, run.episodes, run.snapshots));
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    run.episodes.push_back(simulate_episode(config, run.snapshots.back(), rng));
  }
  return run;
}

McValue counterfactual_value(const PlmConfig& config, const RolloutPolicy& policy,
                             int samples, Rng& rng) {
  config.validate();
  if (samples < 1) throw ConfigError("counterfactual rollout needs samples >= 1");
  const int l = config.horizon;

  double sum = 0.0, sum_sq = 0.0;
  std::vector<VectorXd> contexts;
  std::vector<int> arms;
  for (int s = 0; s < samples; ++s) {
    contexts.clear();
    arms.clear();
    VectorXd x = config.init.draw(rng);
    contexts.push_back(x);
    for (int j = 1; j <= l; ++j) {
      arms.push_back(policy(j, contexts, arms, rng));
      if (j == l) break;
      VectorXd shock(config.dim);
      for (int k = 0; k < config.dim; ++k) shock[k] = config.eta.draw(rng);
      const VectorXd phi = config.features.eval(j, contexts, arms);
      VectorXd next = phi + shock;
      if (j == 1)
        next += config.beta.eval(contexts[0]);
      else
        next += config.gamma_for(j + 1) * contexts.back();
      contexts.push_back(std::move(next));
    }
    const VectorXd phi_l = config.features.eval(l, contexts, arms);
    const double y = config.theta_last.dot(phi_l) +
                     config.omega.dot(contexts.back()) +
                     config.kappa.eval(contexts[0]) + config.eps.draw(rng);
    sum += y;
    sum_sq += y * y;
  }
  McValue v;
  v.samples = samples;
  v.mean = sum / samples;
  const double var =
      samples > 1 ? std::max(0.0, (sum_sq - samples * v.mean * v.mean) / (samples - 1))
                  : 0.0;
  v.se = std::sqrt(var / samples);
  return v;
}

}  // namespace rwz
