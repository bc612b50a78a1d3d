#include "rwz/estimator.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <cmath>

namespace rwz {
namespace {

struct EpisodeTerms {
  MatrixXd weighted_jacobian;  // H_i J_i
  VectorXd weighted_rhs;       // y_i H_i (phi_i - q_i)
  VectorXd weighted_moment;    // H_i m(Z_i; theta_ref), empty without theta_ref
};

struct Accum {
  MatrixXd a;
  VectorXd b;
  VectorXd s;
};

// Fixed-topology pairwise tree reduction over [lo, hi); the summation order
// is a function of the index range only, so results are reproducible
// independent of any execution interleaving.
Accum pairwise_accumulate(std::size_t lo, std::size_t hi,
                          const std::function<Accum(std::size_t)>& leaf) {
  if (hi - lo == 1) return leaf(lo);
  const std::size_t mid = lo + (hi - lo) / 2;
  Accum left = pairwise_accumulate(lo, mid, leaf);
  const Accum right = pairwise_accumulate(mid, hi, leaf);
  left.a += right.a;
  left.b += right.b;
  if (left.s.size() > 0) left.s += right.s;
  return left;
}

double min_abs_eigenvalue(const MatrixXd& mat, double* max_abs = nullptr) {
  Eigen::EigenSolver<MatrixXd> es(mat, /*computeEigenvectors=*/false);
  const auto lambda = es.eigenvalues();
  double lo = std::abs(lambda[0]);
  double hi = lo;
  for (Eigen::Index k = 1; k < lambda.size(); ++k) {
    const double a = std::abs(lambda[k]);
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  if (max_abs) *max_abs = hi;
  return lo;
}

ZEstimate zero_fallback(int l, int d, int n, double alpha, WeightScheme scheme,
                        const MatrixXd& b_n, double min_eig, double threshold,
                        std::string note) {
  ZEstimate est;
  est.theta_hat = ParameterVector(l, d);
  est.b_n = b_n;
  est.event_ok = false;
  est.min_abs_eig = min_eig;
  est.event_threshold = threshold;
  est.scheme = scheme;
  est.n = n;
  est.alpha = alpha;
  est.note = std::move(note);
  return est;
}

}  // namespace

ZEstimate solve(const EstimationInput& input, const SchemeSpec& scheme,
                const ParameterVector* theta_ref) {
  if (!input.features) throw ConfigError("estimation needs a feature map");
  if (input.alpha < 0.0 || input.alpha >= 1.0)
    throw ConfigError("alpha must lie in [0,1)");
  if (input.mode == MomentMode::Ope && !input.contrast)
    throw ConfigError("Ope mode needs a contrast provider");
  if (input.mode == MomentMode::Baseline && input.contrast)
    throw ConfigError("Baseline mode must not carry contrasts");
  if (scheme.scheme == WeightScheme::Oracle && !scheme.oracle_f)
    throw ConfigError("oracle scheme needs an f provider");
  if (scheme.scheme == WeightScheme::Feasible &&
      input.mode == MomentMode::Ope && scheme.nuisance.plm_mode)
    throw ConfigError("Ope feasible weights need the generic nuisance mode");
  if (scheme.split_half && scheme.scheme != WeightScheme::Feasible)
    throw ConfigError("sample splitting applies to the feasible scheme only");
  if (scheme.weight_scale == 0.0) throw ConfigError("weight scale must be nonzero");
  scheme.weights.validate();

  const int l = input.features->horizon;
  const int d = input.features->dim;
  const int p = 1 + d * l;
  const int n = static_cast<int>(input.episodes.size());
  if (n < p) throw ConfigError("need at least 1 + d*l episodes");

  double floor_c = input.cov_floor_c;
  std::vector<StageStack> stacks;
  std::vector<std::vector<ConditionalMoments>> moments;
  stacks.reserve(input.episodes.size());
  moments.reserve(input.episodes.size());
  for (std::size_t i = 0; i < input.episodes.size(); ++i) {
    const EpisodeRecord& ep = input.episodes[i];
    if (ep.index != static_cast<int>(i) + 1)
      throw ConfigError("episodes must be indexed 1..n in order");
    if (ep.policy_id < 0 ||
        ep.policy_id >= static_cast<int>(input.snapshots.size()))
      throw ConfigError("episode references unknown policy snapshot");
    const PolicySnapshot& snap =
        input.snapshots[static_cast<std::size_t>(ep.policy_id)];
    if (floor_c == 0.0) floor_c = snap.cov_floor_c;
    moments.push_back(stage_moments(snap, *input.features, ep));
    std::optional<BlipContrast> contrast;
    if (input.contrast) contrast = input.contrast(ep);
    stacks.push_back(stage_stack(ep, *input.features, moments.back(),
                                 contrast ? &*contrast : nullptr));
  }

  // Per-episode weights; a floor violation anywhere becomes the fallback.
  // Split mode consumes only episodes [first, n).
  std::size_t first = 0;
  std::vector<WeightMatrices> weights(input.episodes.size());
  try {
    switch (scheme.scheme) {
      case WeightScheme::Uniform: {
        for (auto& w : weights) w = uniform_weights(l, d);
        break;
      }
      case WeightScheme::Consistent: {
        for (std::size_t i = 0; i < weights.size(); ++i)
          weights[i] = consistent_weights(moments[i], scheme.weights);
        break;
      }
      case WeightScheme::Oracle: {
        for (std::size_t i = 0; i < weights.size(); ++i) {
          const std::vector<double> f = scheme.oracle_f(input.episodes[i]);
          weights[i] = oracle_weights(moments[i], f, scheme.weights);
        }
        break;
      }
      case WeightScheme::Feasible: {
        if (scheme.split_half) {
          // Half/half split: nuisances from episodes 1..n/2, estimate from
          // the rest.
          first = input.episodes.size() / 2;
          if (static_cast<int>(input.episodes.size() - first) < p)
            throw ConfigError("second half too small for the split estimate");
          EstimationInput head = input;
          head.episodes = input.episodes.subspan(0, first);
          SchemeSpec consistent;
          consistent.scheme = WeightScheme::Consistent;
          consistent.weights = scheme.weights;
          const ZEstimate prior = solve(head, consistent);
          const ParameterVector theta_bar =
              prior.event_ok ? prior.theta_hat : ParameterVector(l, d);
          const NuisanceModel model = fit_nuisance(
              head.episodes, std::span<const StageStack>(stacks.data(), first),
              *input.features, theta_bar, scheme.nuisance);
          for (std::size_t i = first; i < weights.size(); ++i)
            weights[i] = feasible_weights_for(model, input.episodes[i],
                                              moments[i], scheme.weights);
          break;
        }
        // Prequential sweep: consistent estimate and nuisance model refit at
        // geometric checkpoints, frozen in between.  Until the first fit the
        // plug-in is pinned at the cap: an over-estimated f costs at most a
        // unit weight, an under-estimated one inflates the score variance by
        // f/f-hat, up to f/sigma^2.
        ParameterVector theta_bar(l, d);
        NuisanceModel model;
        model.plm_mode = scheme.nuisance.plm_mode;
        model.treatments = input.features->treatments;
        model.sigma2.assign(static_cast<std::size_t>(l) + 1,
                            scheme.weights.m2_cap);
        int next_checkpoint = scheme.refit_start;
        for (std::size_t i = 0; i < weights.size(); ++i) {
          if (static_cast<int>(i) >= next_checkpoint) {
            EstimationInput prefix = input;
            prefix.episodes = input.episodes.subspan(0, i);
            SchemeSpec consistent;
            consistent.scheme = WeightScheme::Consistent;
            consistent.weights = scheme.weights;
            const ZEstimate prior = solve(prefix, consistent);
            if (prior.event_ok) theta_bar = prior.theta_hat;
            model = fit_nuisance(input.episodes.subspan(0, i),
                                 std::span<const StageStack>(stacks.data(), i),
                                 *input.features, theta_bar, scheme.nuisance);
            while (next_checkpoint <= static_cast<int>(i)) next_checkpoint *= 2;
          }
          weights[i] = feasible_weights_for(model, input.episodes[i],
                                            moments[i], scheme.weights);
        }
        break;
      }
    }
  } catch (const NearSingularError& err) {
    const int n_eff = static_cast<int>(input.episodes.size() - first);
    return zero_fallback(l, d, n_eff, input.alpha, scheme.scheme,
                         MatrixXd::Zero(p, p), err.lambda_min, 0.0,
                         std::string("weight construction hit a singular "
                                     "covariance: ") +
                             err.what());
  }

  if (scheme.weight_scale != 1.0) {
    for (std::size_t i = first; i < weights.size(); ++i) {
      weights[i].h0 *= scheme.weight_scale;
      for (auto& block : weights[i].blocks) block *= scheme.weight_scale;
    }
  }

  const int n_eff = static_cast<int>(input.episodes.size() - first);
  const bool with_score = theta_ref != nullptr;
  auto leaf = [&](std::size_t i) {
    Accum acc;
    acc.a = weights[i].apply_rows(moment_jacobian(stacks[i]));
    acc.b = input.episodes[i].outcome *
            weights[i].apply(stacks[i].phi_stack() - stacks[i].q_stack());
    if (with_score) {
      const MomentEvaluation ev =
          evaluate_moment(stacks[i], input.episodes[i].outcome, *theta_ref);
      acc.s = weights[i].apply(ev.m);
    }
    return acc;
  };
  const Accum total = pairwise_accumulate(first, input.episodes.size(), leaf);

  const double scale =
      std::pow(static_cast<double>(n_eff), input.alpha / 2.0 - 1.0);
  const MatrixXd b_n = -scale * total.a;

  double max_eig = 0.0;
  const double min_eig = min_abs_eigenvalue(b_n, &max_eig);
  double threshold = 0.0;
  switch (scheme.scheme) {
    case WeightScheme::Uniform:
      threshold = 1e-10 * std::max(1.0, max_eig);
      break;
    case WeightScheme::Consistent:
      threshold = floor_c / 2.0;
      break;
    case WeightScheme::Oracle:
    case WeightScheme::Feasible:
      threshold = floor_c / (2.0 * scheme.weights.m());
      break;
  }

  if (min_eig < threshold)
    return zero_fallback(l, d, n_eff, input.alpha, scheme.scheme, b_n, min_eig,
                         threshold, "eigenvalue event failed");

  ZEstimate est;
  est.theta_hat = ParameterVector::from_flat(
      l, d, Eigen::ColPivHouseholderQR<MatrixXd>(total.a).solve(-total.b));
  est.b_n = b_n;
  est.event_ok = true;
  est.min_abs_eig = min_eig;
  est.event_threshold = threshold;
  est.scheme = scheme.scheme;
  est.n = n_eff;
  est.alpha = input.alpha;
  if (with_score)
    est.score = total.s / std::sqrt(static_cast<double>(n_eff));
  return est;
}

VectorXd standardized_error(const ZEstimate& estimate,
                            const ParameterVector& theta_true) {
  if (!estimate.event_ok)
    throw UndefinedEventError(
        "standardized error undefined on the zero fallback");
  const double scale =
      std::pow(static_cast<double>(estimate.n), (1.0 - estimate.alpha) / 2.0);
  return scale * (estimate.b_n * (estimate.theta_hat.flat - theta_true.flat));
}

RefitFn make_consistent_refit(const FeatureMap* features, WeightConfig wcfg,
                              double alpha) {
  return [features, wcfg, alpha](std::span<const EpisodeRecord> episodes,
                                 std::span<const PolicySnapshot> snapshots)
             -> std::optional<ParameterVector> {
    const int p = 1 + features->dim * features->horizon;
    if (static_cast<int>(episodes.size()) < p) return std::nullopt;
    EstimationInput input;
    input.episodes = episodes;
    input.snapshots = snapshots;
    input.features = features;
    input.alpha = alpha;
    SchemeSpec scheme;
    scheme.scheme = WeightScheme::Consistent;
    scheme.weights = wcfg;
    try {
      const ZEstimate est = solve(input, scheme);
      if (!est.event_ok) return std::nullopt;
      return est.theta_hat;
    } catch (const Error&) {
      return std::nullopt;
    }
  };
}

}  // namespace rwz
