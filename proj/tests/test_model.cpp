#include <doctest.h>

#include <cmath>

#include "rwz/moments.hpp"
#include "rwz/stats.hpp"
#include "test_support.hpp"

using namespace rwz;
using namespace rwz::test;

TEST_CASE("zero treatments, zero baselines, zero noise give outcome 0") {
  PlmConfig c = deterministic_config();
  const PolicySnapshot always0 = fixed_snapshot(c, {1.0, 0.0});
  Rng rng(1);
  const EpisodeRecord ep = simulate_episode(c, always0, rng);
  CHECK(ep.outcome == 0.0);
  for (const VectorXd& x : ep.contexts)
    if (&x != &ep.contexts[0]) CHECK(x.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hand unroll: X1=1, always treat, no noise gives y = theta + omega") {
  PlmConfig c = deterministic_config();
  const PolicySnapshot always1 = fixed_snapshot(c, {0.0, 1.0});
  Rng rng(1);
  const EpisodeRecord ep = simulate_episode(c, always1, rng);
  CHECK(ep.contexts[1][0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(ep.outcome == doctest::Approx(c.theta_last[0] + c.omega[0]).epsilon(1e-15));
}

TEST_CASE("same seed reproduces the episode bit for bit") {
  PlmConfig c = scalar_config();
  const PolicySnapshot snap = fixed_snapshot(c, {0.5, 0.5});
  Rng a(99), b(99);
  const EpisodeRecord e1 = simulate_episode(c, snap, a);
  const EpisodeRecord e2 = simulate_episode(c, snap, b);
  CHECK(e1.outcome == e2.outcome);
  REQUIRE(e1.contexts.size() == e2.contexts.size());
  for (std::size_t j = 0; j < e1.contexts.size(); ++j) {
    CHECK(e1.contexts[j] == e2.contexts[j]);
    CHECK(e1.treatments[j] == e2.treatments[j]);
  }
}

TEST_CASE("domain escape raises instead of clipping") {
  PlmConfig c = scalar_config();
  c.state_bound = 1.2;  // X2 can reach ~2.2 under treatment
  const PolicySnapshot always1 = fixed_snapshot(c, {0.0, 1.0});
  Rng rng(5);
  CHECK_THROWS_AS(
      [&] {
        for (int i = 0; i < 200; ++i) simulate_episode(c, always1, rng);
      }(),
      DomainEscapeError);
}

TEST_CASE("theta chain: l=3 scalar gives theta_1 = Gamma_3^T theta_2") {
  PlmConfig c = scalar_config();
  c.horizon = 3;
  c.features.horizon = 3;
  c.gamma = {MatrixXd::Constant(1, 1, 0.5)};
  c.theta_last = VectorXd::Constant(1, 2.0);
  c.omega = VectorXd::Constant(1, 3.0);
  const auto chain = c.theta_chain();
  CHECK(chain[2][0] == 2.0);
  CHECK(chain[1][0] == 3.0);
  CHECK(chain[0][0] == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("theta_0 oracle: zero baselines give 0, constant kappa gives the constant") {
  PlmConfig c = deterministic_config();
  TrueParameters t = derive_true_parameters(c, 20000, 7);
  CHECK(t.theta.theta0() == 0.0);
  CHECK(t.theta0_se == 0.0);

  c.kappa.kind = BaselineKind::Affine;
  c.kappa.linear = VectorXd::Zero(1);
  c.kappa.offset = 1.7;
  t = derive_true_parameters(c, 20000, 7);
  CHECK(t.theta.theta0() == doctest::Approx(1.7).epsilon(1e-12));
}

TEST_CASE("theta_0 oracle needs enough samples") {
  CHECK_THROWS_AS(derive_true_parameters(scalar_config(), 100, 1), ConfigError);
}

TEST_CASE("counterfactual value of the zero policy matches the theta_0 oracle") {
  const PlmConfig c = scalar_config();
  const TrueParameters t = derive_true_parameters(c, 200000, 11);
  Rng rng(13);
  const McValue v =
      counterfactual_value(c, static_rollout({0, 0}), 200000, rng);
  const double joint_se = std::hypot(t.theta0_se, v.se);
  CHECK(std::abs(v.mean - t.theta.theta0()) < 3 * joint_se);
  // the quadrature route agrees as well
  CHECK(std::abs(c.g1_mean() - t.theta.theta0()) < 3 * t.theta0_se);
}

TEST_CASE("deterministic model and policy have zero standard error") {
  const PlmConfig c = deterministic_config();
  Rng rng(3);
  const McValue v = counterfactual_value(c, static_rollout({1, 1}), 500, rng);
  CHECK(v.se == 0.0);
  CHECK(v.mean == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("counterfactual under the behavior snapshot matches simulated outcomes") {
  const PlmConfig c = scalar_config();
  const PolicySnapshot snap = fixed_snapshot(c, {0.3, 0.7});
  Rng rng(17);
  const McValue v =
      counterfactual_value(c, snapshot_rollout(snap, c.features), 100000, rng);

  const SimulatedRun run = fixed_policy_run(c, {0.3, 0.7}, 100000, 19);
  double mean = 0.0;
  for (const EpisodeRecord& ep : run.episodes) mean += ep.outcome;
  mean /= static_cast<double>(run.episodes.size());
  double var = 0.0;
  for (const EpisodeRecord& ep : run.episodes)
    var += (ep.outcome - mean) * (ep.outcome - mean);
  const double sim_se =
      std::sqrt(var / (run.episodes.size() - 1.0) / run.episodes.size());
  CHECK(std::abs(v.mean - mean) < 3 * std::hypot(v.se, sim_se));
}

TEST_CASE("zero-treatment annihilation holds across feature kinds") {
  for (FeatureKind kind :
       {FeatureKind::TreatmentTimesContext, FeatureKind::TreatmentTimesContextPair,
        FeatureKind::OneHot}) {
    FeatureMap f;
    f.kind = kind;
    f.horizon = 3;
    f.dim = kind == FeatureKind::OneHot ? 2 : 2;
    f.treatments = TreatmentSpace::arms(3);
    f.context_bound = 5.0;
    f.validate();

    Rng rng(23);
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<VectorXd> xs;
      std::vector<int> arms;
      for (int j = 0; j < 3; ++j) {
        VectorXd x(2);
        x << rng.uniform(-4, 4), rng.uniform(-4, 4);
        xs.push_back(x);
        arms.push_back(rng.uniform_int(3));
      }
      const int stage = 1 + rng.uniform_int(3);
      arms[static_cast<std::size_t>(stage - 1)] = 0;
      CHECK(f.eval(stage, xs, arms).norm() == 0.0);
    }
  }
}

TEST_CASE("unrolled outcome identity with recorded noises") {
  const PlmConfig c = matrix_config();
  const PolicySnapshot snap = fixed_snapshot(c, {0.3, 0.4, 0.3});
  const auto chain = c.theta_chain();
  Rng rng(29);
  for (int trial = 0; trial < 200; ++trial) {
    EpisodeNoise noise;
    const EpisodeRecord ep = simulate_episode(c, snap, rng, &noise);
    // unroll from stage 2: y = sum_{j>=2} theta_j phi_j + theta_1^T X_2 +
    // kappa(X_1) + sum_{j>=3} theta_{j-1}^T eta_j + eps
    double rhs = chain[0].dot(ep.contexts[1]) + c.kappa.eval(ep.contexts[0]) +
                 noise.eps;
    for (int j = 2; j <= c.horizon; ++j)
      rhs += chain[static_cast<std::size_t>(j - 1)].dot(
          c.features.eval(j, ep.contexts, ep.treatments));
    for (int j = 3; j <= c.horizon; ++j)
      rhs += chain[static_cast<std::size_t>(j - 2)].dot(
          noise.eta[static_cast<std::size_t>(j - 2)]);
    CHECK(ep.outcome == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("residuals match the closed-form exogenous decomposition") {
  const PlmConfig c = matrix_config();
  const PolicySnapshot snap = fixed_snapshot(c, {0.4, 0.3, 0.3});
  const auto chain = c.theta_chain();
  const ParameterVector theta = chain_parameters(c);
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    EpisodeNoise noise;
    const EpisodeRecord ep = simulate_episode(c, snap, rng, &noise);
    const auto moms = stage_moments(snap, c.features, ep);
    const StageStack stack = stage_stack(ep, c.features, moms);
    const MomentEvaluation ev = evaluate_moment(stack, ep.outcome, theta);

    for (int j = 1; j <= c.horizon; ++j) {
      double expected = c.kappa.eval(ep.contexts[0]) + noise.eps;
      if (j == 1)
        expected += chain[0].dot(c.beta.eval(ep.contexts[0]));
      else
        expected += chain[static_cast<std::size_t>(j - 2)].dot(
            ep.contexts[static_cast<std::size_t>(j - 1)]);
      for (int jp = j + 1; jp <= c.horizon; ++jp)
        expected += chain[static_cast<std::size_t>(jp - 2)].dot(
            noise.eta[static_cast<std::size_t>(jp - 2)]);
      CHECK(ev.residuals[static_cast<std::size_t>(j - 1)] ==
            doctest::Approx(expected).epsilon(1e-10));
    }
  }
}

TEST_CASE("sigma_j^2 closed form matches a Monte Carlo estimate") {
  const PlmConfig c = matrix_config();
  const PolicySnapshot snap = fixed_snapshot(c, {0.4, 0.3, 0.3});
  const ParameterVector theta = chain_parameters(c);
  Rng rng(37);
  const int n = 40000;
  std::vector<std::vector<double>> centered(static_cast<std::size_t>(c.horizon));
  for (int i = 0; i < n; ++i) {
    const EpisodeRecord ep = simulate_episode(c, snap, rng);
    const auto moms = stage_moments(snap, c.features, ep);
    const StageStack stack = stage_stack(ep, c.features, moms);
    const MomentEvaluation ev = evaluate_moment(stack, ep.outcome, theta);
    for (int j = 1; j <= c.horizon; ++j) {
      const double g = c.g_value(j, ep.contexts);
      centered[static_cast<std::size_t>(j - 1)].push_back(
          ev.residuals[static_cast<std::size_t>(j - 1)] - g);
    }
  }
  for (int j = 1; j <= c.horizon; ++j) {
    const auto& sample = centered[static_cast<std::size_t>(j - 1)];
    const double var = variance_of(sample);
    // variance of the sample variance for bounded data, rough normal SE
    const double se = var * std::sqrt(2.0 / (n - 1.0)) * 2.0;
    CHECK(std::abs(var - c.sigma_j_sq(j)) < 4 * se + 1e-4);
  }
}

TEST_CASE("simulate_run indexes episodes 1..n with matching snapshots") {
  const PlmConfig c = scalar_config();
  const SimulatedRun run = fixed_policy_run(c, {0.5, 0.5}, 50, 41);
  for (int i = 0; i < 50; ++i) {
    CHECK(run.episodes[static_cast<std::size_t>(i)].index == i + 1);
    CHECK(run.episodes[static_cast<std::size_t>(i)].policy_id == i);
    CHECK(run.snapshots[static_cast<std::size_t>(i)].id == i);
  }
}
