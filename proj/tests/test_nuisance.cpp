#include <doctest.h>

#include <cmath>

#include "rwz/experiment.hpp"
#include "rwz/nuisance.hpp"
#include "rwz/stats.hpp"
#include "test_support.hpp"

using namespace rwz;
using namespace rwz::test;

namespace {

std::vector<StageStack> stacks_of(const SimulatedRun& run, const PlmConfig& c) {
  std::vector<StageStack> stacks;
  stacks.reserve(run.episodes.size());
  for (const EpisodeRecord& ep : run.episodes) {
    const auto moms = stage_moments(
        run.snapshots[static_cast<std::size_t>(ep.policy_id)], c.features, ep);
    stacks.push_back(stage_stack(ep, c.features, moms));
  }
  return stacks;
}

}  // namespace

TEST_CASE("polynomial regressor: constant targets, exact interpolation, "
          "underdetermined error") {
  std::vector<VectorXd> xs;
  std::vector<double> ys;
  Rng rng(81);
  for (int i = 0; i < 20; ++i) {
    xs.push_back(VectorXd::Constant(1, rng.uniform(-1, 1)));
    ys.push_back(3.25);
  }
  const auto constant = PolynomialRegressor::fit(xs, ys, 2, 1e-8, 1e6);
  CHECK(constant.predict(VectorXd::Constant(1, 0.7)) ==
        doctest::Approx(3.25).epsilon(1e-6));

  const std::vector<VectorXd> two = {VectorXd::Constant(1, 0.0),
                                     VectorXd::Constant(1, 1.0)};
  const std::vector<double> targets = {1.0, 3.0};
  const auto line = PolynomialRegressor::fit(two, targets, 1, 1e-10, 1e6);
  CHECK(line.predict(VectorXd::Constant(1, 0.0)) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(line.predict(VectorXd::Constant(1, 1.0)) == doctest::Approx(3.0).epsilon(1e-5));

  CHECK_THROWS_AS(PolynomialRegressor::fit(two, targets, 2, 1e-8, 1e6),
                  UnderdeterminedFitError);
}

TEST_CASE("generic g fit recovers the residual mean for j >= 2") {
  PlmConfig c = scalar_config();
  c.beta.kind = BaselineKind::Zero;
  const ParameterVector theta_bar = chain_parameters(c);
  NuisanceConfig ncfg;
  ncfg.plm_mode = false;

  double prev_err = 0.0;
  int step = 0;
  for (int n : {500, 8000}) {
    const SimulatedRun run = fixed_policy_run(c, {0.5, 0.5}, n, 83);
    const auto stacks = stacks_of(run, c);
    const auto g2 = fit_generic_g(run.episodes, stacks, theta_bar, 2,
                                  c.features.treatments, ncfg);
    double err = 0.0;
    const int probes = 200;
    for (int k = 0; k < probes; ++k) {
      const EpisodeRecord& ep = run.episodes[static_cast<std::size_t>(k)];
      const VectorXd h =
          history_vector(2, ep.contexts, ep.treatments, c.features.treatments);
      err += std::abs(g2.predict(h) - c.g_value(2, ep.contexts));
    }
    err /= probes;
    if (step++ == 0)
      prev_err = err;
    else
      CHECK(err < prev_err);
    CHECK(err < 0.25);
  }
}

TEST_CASE("sigma fit: zero residuals, single episode, closed-form limit") {
  // noiseless model + exact nuisances -> zero residual variance
  PlmConfig det = deterministic_config();
  const SimulatedRun clean = fixed_policy_run(det, {0.5, 0.5}, 64, 85);
  const auto clean_stacks = stacks_of(clean, det);
  const ParameterVector theta_det = chain_parameters(det);
  const NuisanceModel clean_model = fit_nuisance(
      clean.episodes, clean_stacks, det.features, theta_det, NuisanceConfig{});
  for (double s2 : clean_model.sigma2) CHECK(s2 < 1e-12);

  // i = 1: the squared single residual (stage l, g forced to zero)
  const PlmConfig c = scalar_config();
  const SimulatedRun one = fixed_policy_run(c, {0.5, 0.5}, 1, 87);
  const auto one_stacks = stacks_of(one, c);
  const ParameterVector theta_bar = chain_parameters(c);
  const double got = fit_sigma(one.episodes, one_stacks, theta_bar,
                               [](std::size_t) { return 0.0; }, c.horizon);
  const double resid =
      one.episodes[0].outcome -
      theta_bar.stage(2).dot(one_stacks[0].reg[1]);
  CHECK(got == doctest::Approx(resid * resid).epsilon(1e-14));

  // plugged-in truth: sigma-bar^2 approaches the closed form
  const SimulatedRun big = fixed_policy_run(c, {0.5, 0.5}, 40000, 89);
  const auto big_stacks = stacks_of(big, c);
  for (int j = 1; j <= c.horizon; ++j) {
    const double sigma2 = fit_sigma(
        big.episodes, big_stacks, theta_bar,
        [&](std::size_t i) { return c.g_value(j, big.episodes[i].contexts); },
        j);
    CHECK(sigma2 == doctest::Approx(c.sigma_j_sq(j)).epsilon(0.05));
  }
}

TEST_CASE("beta fit: exact zero, affine recovery, cosine within budget") {
  PlmConfig zero = scalar_config();
  zero.beta.kind = BaselineKind::Zero;
  zero.eta.kind = NoiseKind::None;
  zero.eta.scale = 0.0;
  const SimulatedRun rz = fixed_policy_run(zero, {0.5, 0.5}, 200, 91);
  const auto beta_zero = fit_plm_beta(rz.episodes, zero.features, NuisanceConfig{});
  for (int k = 0; k < 50; ++k)
    CHECK(std::abs(beta_zero.predict(rz.episodes[static_cast<std::size_t>(k)].contexts[0])[0]) <
          1e-9);

  const PlmConfig affine = scalar_config();
  const SimulatedRun ra = fixed_policy_run(affine, {0.5, 0.5}, 10000, 93);
  const auto beta_affine = fit_plm_beta(ra.episodes, affine.features, NuisanceConfig{});
  Rng rng(95);
  for (int k = 0; k < 50; ++k) {
    const VectorXd x = VectorXd::Constant(1, rng.uniform(0.5, 1.5));
    CHECK(std::abs(beta_affine.predict(x)[0] - affine.beta.eval(x)[0]) < 0.02);
  }

  PlmConfig cosine = scalar_config();
  cosine.beta.kind = BaselineKind::Cosine;
  cosine.beta.amp = VectorXd::Constant(1, 0.4);
  cosine.beta.freq = VectorXd::Constant(1, 1.0);
  cosine.beta.phase = VectorXd::Constant(1, 0.3);
  NuisanceConfig cubic;
  cubic.degree = 3;
  const SimulatedRun rc = fixed_policy_run(cosine, {0.5, 0.5}, 10000, 97);
  const auto beta_cos = fit_plm_beta(rc.episodes, cosine.features, cubic);
  double l2 = 0.0;
  const int fresh = 10000;
  Rng xrng(99);
  for (int k = 0; k < fresh; ++k) {
    const VectorXd x = VectorXd::Constant(1, xrng.uniform(0.5, 1.5));
    const double diff = beta_cos.predict(x)[0] - cosine.beta.eval(x)[0];
    l2 += diff * diff;
  }
  CHECK(std::sqrt(l2 / fresh) < 0.01);
}

TEST_CASE("kappa fit: exact constant, affine recovery, contamination bias bound") {
  PlmConfig c = scalar_config();
  c.eps.kind = NoiseKind::None;
  c.eps.scale = 0.0;
  c.kappa.kind = BaselineKind::Affine;
  c.kappa.linear = VectorXd::Zero(1);
  c.kappa.offset = 0.8;
  const ParameterVector theta_bar = chain_parameters(c);

  const SimulatedRun run = fixed_policy_run(c, {0.5, 0.5}, 500, 101);
  const auto kappa_const =
      fit_plm_kappa(run.episodes, c.features, theta_bar, NuisanceConfig{});
  CHECK(kappa_const.predict(VectorXd::Constant(1, 1.1)) ==
        doctest::Approx(0.8).epsilon(1e-6));

  const PlmConfig full = scalar_config();
  const ParameterVector full_bar = chain_parameters(full);
  const SimulatedRun big = fixed_policy_run(full, {0.5, 0.5}, 10000, 103);
  const auto kappa_affine =
      fit_plm_kappa(big.episodes, full.features, full_bar, NuisanceConfig{});
  Rng rng(105);
  for (int k = 0; k < 50; ++k) {
    const VectorXd x = VectorXd::Constant(1, rng.uniform(0.5, 1.5));
    CHECK(std::abs(kappa_affine.predict(x) - full.kappa.eval(x)) < 0.03);
  }

  // constant family: perturbing theta_l by delta biases kappa-hat by at most
  // |delta| * max |phi_l|
  NuisanceConfig constant_family;
  constant_family.degree = 0;
  const auto clean =
      fit_plm_kappa(run.episodes, c.features, theta_bar, constant_family);
  ParameterVector shifted = theta_bar;
  const double delta = 0.37;
  shifted.stage(c.horizon)[0] += delta;
  const auto biased =
      fit_plm_kappa(run.episodes, c.features, shifted, constant_family);
  double phi_max = 0.0;
  for (std::size_t i = 0; i < run.episodes.size(); ++i) {
    const auto& ep = run.episodes[i];
    phi_max = std::max(phi_max,
                       std::abs(c.features.eval(c.horizon, ep.contexts,
                                                ep.treatments)[0]));
  }
  const VectorXd probe = VectorXd::Constant(1, 1.0);
  CHECK(std::abs(biased.predict(probe) - clean.predict(probe)) <=
        delta * phi_max + 1e-9);
}

TEST_CASE("predict_f composes g and sigma, and PLM agrees with the generic fit") {
  const PlmConfig c = scalar_config();
  NuisanceModel manual;
  manual.plm_mode = false;
  manual.treatments = c.features.treatments;
  manual.sigma2 = {1.0, 1.0, 1.0};
  std::vector<VectorXd> contexts = {VectorXd::Constant(1, 1.0),
                                    VectorXd::Constant(1, 1.0)};
  std::vector<int> arms = {0, 0};
  CHECK(manual.predict_f(1, contexts, arms, 5) == doctest::Approx(1.0));

  const ParameterVector theta_bar = chain_parameters(c);
  const SimulatedRun run = fixed_policy_run(c, {0.5, 0.5}, 20000, 107);
  const auto stacks = stacks_of(run, c);
  const NuisanceModel plm = fit_nuisance(run.episodes, stacks, c.features,
                                         theta_bar, NuisanceConfig{});
  NuisanceConfig generic_cfg;
  generic_cfg.plm_mode = false;
  const NuisanceModel generic = fit_nuisance(run.episodes, stacks, c.features,
                                             theta_bar, generic_cfg);
  for (int k = 0; k < 100; ++k) {
    const EpisodeRecord& ep = run.episodes[static_cast<std::size_t>(k * 10)];
    for (int j = 1; j <= c.horizon; ++j) {
      const double f_true = c.f_oracle(j, ep.contexts);
      const double f_plm =
          plm.predict_f(j, ep.contexts, ep.treatments, ep.index + 30000);
      const double f_gen =
          generic.predict_f(j, ep.contexts, ep.treatments, ep.index + 30000);
      CHECK(std::abs(f_plm - f_true) < 0.08 + 0.05 * f_true);
      CHECK(std::abs(f_plm - f_gen) < 0.15 + 0.05 * f_true);
    }
  }
}

TEST_CASE("staleness: a model fitted through episode i refuses episode i") {
  const PlmConfig c = scalar_config();
  const ParameterVector theta_bar = chain_parameters(c);
  const SimulatedRun run = fixed_policy_run(c, {0.5, 0.5}, 64, 109);
  const auto stacks = stacks_of(run, c);
  const NuisanceModel model = fit_nuisance(run.episodes, stacks, c.features,
                                           theta_bar, NuisanceConfig{});
  CHECK(model.fit_boundary == 64);
  const auto& ep = run.episodes[10];
  CHECK_THROWS_AS(model.predict_f(1, ep.contexts, ep.treatments, 64),
                  StalenessError);
  CHECK_NOTHROW(model.predict_f(1, ep.contexts, ep.treatments, 65));
}

TEST_CASE("prequential integrity: later episodes cannot change earlier weights") {
  const PlmConfig c = scalar_config();
  const ParameterVector theta_bar = chain_parameters(c);
  SimulatedRun run = fixed_policy_run(c, {0.5, 0.5}, 300, 111);
  const auto stacks = stacks_of(run, c);

  const int boundary = 128;
  const NuisanceModel model = fit_nuisance(
      std::span(run.episodes.data(), boundary),
      std::span(stacks.data(), boundary), c.features, theta_bar, NuisanceConfig{});
  const EpisodeRecord& target = run.episodes[200];
  const double before = model.predict_f(2, target.contexts, target.treatments, 201);

  // corrupt every episode past the boundary and refit on the same prefix
  for (std::size_t i = boundary; i < run.episodes.size(); ++i)
    run.episodes[i].outcome += 100.0;
  const NuisanceModel refit = fit_nuisance(
      std::span(run.episodes.data(), boundary),
      std::span(stacks.data(), boundary), c.features, theta_bar, NuisanceConfig{});
  const double after = refit.predict_f(2, target.contexts, target.treatments, 201);
  CHECK(before == after);
}

TEST_CASE("sigma-bar error shrinks along a prefix sweep with plugged-in truth") {
  const PlmConfig c = scalar_config();
  const ParameterVector theta_bar = chain_parameters(c);
  const int stage = 1;
  const double target = c.sigma_j_sq(stage);
  const int reps = 30;

  double prev = -1.0;
  for (int n : {100, 10000}) {
    std::vector<double> errs;
    for (int rep = 0; rep < reps; ++rep) {
      const SimulatedRun run = fixed_policy_run(
          c, {0.5, 0.5}, n, derive_seed(113, {static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(n)}));
      const auto stacks = stacks_of(run, c);
      const double s2 = fit_sigma(
          run.episodes, stacks, theta_bar,
          [&](std::size_t i) { return c.g_value(stage, run.episodes[i].contexts); },
          stage);
      errs.push_back(std::abs(s2 - target));
    }
    const double mean_err = mean_of(errs);
    if (prev >= 0.0) CHECK(mean_err < prev / 3.0);
    prev = mean_err;
  }
}
