#include <doctest.h>

#include <cmath>

#include "rwz/experiment.hpp"
#include "rwz/stats.hpp"
#include "test_support.hpp"

using namespace rwz;
using namespace rwz::test;

namespace {

// l=1, d=1 fixture with q = 0.5: unit context, fair coin policy, phi = T x.
struct TinyFixture {
  FeatureMap features;
  PolicySnapshot snap;
  EpisodeRecord episode;
  std::vector<ConditionalMoments> moms;
  StageStack stack;

  TinyFixture() {
    features.kind = FeatureKind::TreatmentTimesContext;
    features.horizon = 1;
    features.dim = 1;
    features.treatments = TreatmentSpace::arms(2);
    features.validate();
    snap.kind = PolicyKind::FixedRandomized;
    snap.arm_count = 2;
    snap.fixed_probs = {0.5, 0.5};
    episode.index = 1;
    episode.contexts = {VectorXd::Constant(1, 1.0)};
    episode.treatments = {1};
    episode.outcome = 2.0;
    moms = stage_moments(snap, features, episode);
    stack = stage_stack(episode, features, moms);
  }
};

}  // namespace

TEST_CASE("displayed moment at l=1: m = [0, 0.5]") {
  TinyFixture fix;
  CHECK(fix.moms[0].q[0] == 0.5);
  ParameterVector theta(1, 1);
  theta.theta0() = 1.0;
  theta.stage(1)[0] = 1.0;
  const MomentEvaluation ev = evaluate_moment(fix.stack, fix.episode.outcome, theta);
  CHECK(ev.m[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(ev.m[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(ev.residuals[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("hand Jacobian at l=1: J = -[[1, phi],[0, (phi-q) phi]]") {
  TinyFixture fix;
  const MatrixXd jac = moment_jacobian(fix.stack);
  CHECK(jac(0, 0) == -1.0);
  CHECK(jac(0, 1) == doctest::Approx(-1.0));
  CHECK(jac(1, 0) == 0.0);
  CHECK(jac(1, 1) == doctest::Approx(-0.5));
}

TEST_CASE("Jacobian blocks below the diagonal are exactly zero") {
  const PlmConfig c = matrix_config();
  const SimulatedRun run = fixed_policy_run(c, {0.4, 0.3, 0.3}, 5, 31);
  for (const EpisodeRecord& ep : run.episodes) {
    const auto moms = stage_moments(run.snapshots[static_cast<std::size_t>(ep.policy_id)],
                                    c.features, ep);
    const StageStack stack = stage_stack(ep, c.features, moms);
    const MatrixXd jac = moment_jacobian(stack);
    const int d = c.dim;
    for (int j = 1; j <= c.horizon; ++j)
      for (int jp = 1; jp < j; ++jp)
        CHECK(jac.block(1 + (j - 1) * d, 1 + (jp - 1) * d, d, d)
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    for (int j = 1; j <= c.horizon; ++j)
      CHECK(jac.block(1 + (j - 1) * d, 0, d, 1).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("m is exactly affine: difference check against the Jacobian") {
  const PlmConfig c = matrix_config();
  const SimulatedRun run = fixed_policy_run(c, {0.3, 0.4, 0.3}, 20, 33);
  Rng rng(34);
  const int p = 1 + c.dim * c.horizon;
  for (const EpisodeRecord& ep : run.episodes) {
    const auto moms = stage_moments(run.snapshots[static_cast<std::size_t>(ep.policy_id)],
                                    c.features, ep);
    const StageStack stack = stage_stack(ep, c.features, moms);
    const MatrixXd jac = moment_jacobian(stack);
    VectorXd a(p), b(p);
    for (int k = 0; k < p; ++k) {
      a[k] = rng.uniform(-2, 2);
      b[k] = rng.uniform(-2, 2);
    }
    const auto theta_a = ParameterVector::from_flat(c.horizon, c.dim, a);
    const auto theta_b = ParameterVector::from_flat(c.horizon, c.dim, b);
    const VectorXd lhs = evaluate_moment(stack, ep.outcome, theta_a).m -
                         evaluate_moment(stack, ep.outcome, theta_b).m;
    const VectorXd rhs = jac * (a - b);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);

    // unit-direction finite differences are exact up to float error
    for (int k = 0; k < p; ++k) {
      VectorXd e = a;
      const double eps = 1e-4;
      e[k] += eps;
      const VectorXd fd = (evaluate_moment(stack, ep.outcome,
                                           ParameterVector::from_flat(
                                               c.horizon, c.dim, e))
                               .m -
                           evaluate_moment(stack, ep.outcome, theta_a).m) /
                          eps;
      CHECK((fd - jac.col(k)).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("three-point collinearity of the affine moment") {
  TinyFixture fix;
  Rng rng(35);
  for (int trial = 0; trial < 50; ++trial) {
    VectorXd a(2), c(2);
    a << rng.uniform(-3, 3), rng.uniform(-3, 3);
    c << rng.uniform(-3, 3), rng.uniform(-3, 3);
    const VectorXd b = 0.5 * (a + c);
    const VectorXd ma =
        evaluate_moment(fix.stack, 2.0, ParameterVector::from_flat(1, 1, a)).m;
    const VectorXd mb =
        evaluate_moment(fix.stack, 2.0, ParameterVector::from_flat(1, 1, b)).m;
    const VectorXd mc =
        evaluate_moment(fix.stack, 2.0, ParameterVector::from_flat(1, 1, c)).m;
    CHECK((ma + mc - 2.0 * mb).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("zero-treatment episodes reduce the moment to the annihilated form") {
  const PlmConfig c = scalar_config();
  const PolicySnapshot snap = fixed_snapshot(c, {0.5, 0.5});
  Rng rng(36);
  EpisodeRecord ep = simulate_episode(c, snap, rng);
  ep.treatments.assign(ep.treatments.size(), 0);
  const auto moms = stage_moments(snap, c.features, ep);
  const StageStack stack = stage_stack(ep, c.features, moms);
  ParameterVector theta = chain_parameters(c, 0.35);
  const MomentEvaluation ev = evaluate_moment(stack, ep.outcome, theta);
  CHECK(ev.m[0] == doctest::Approx(ep.outcome - 0.35).epsilon(1e-14));
  for (int j = 1; j <= c.horizon; ++j) {
    CHECK(ev.residuals[static_cast<std::size_t>(j - 1)] ==
          doctest::Approx(ep.outcome).epsilon(1e-14));
    CHECK(ev.m[1 + (j - 1)] ==
          doctest::Approx(-ep.outcome * stack.q[static_cast<std::size_t>(j - 1)][0])
              .epsilon(1e-12));
  }
}

TEST_CASE("average moment vanishes at the true parameters under a fixed policy") {
  const PlmConfig c = scalar_config();
  const TrueParameters truth = derive_true_parameters(c, 200000, 41);
  const SimulatedRun run = fixed_policy_run(c, {0.5, 0.5}, 30000, 43);
  const int p = 1 + c.dim * c.horizon;

  std::vector<std::vector<double>> coords(static_cast<std::size_t>(p));
  for (const EpisodeRecord& ep : run.episodes) {
    const auto moms = stage_moments(run.snapshots[static_cast<std::size_t>(ep.policy_id)],
                                    c.features, ep);
    const StageStack stack = stage_stack(ep, c.features, moms);
    const VectorXd m = evaluate_moment(stack, ep.outcome, truth.theta).m;
    for (int k = 0; k < p; ++k)
      coords[static_cast<std::size_t>(k)].push_back(m[k]);
  }
  for (int k = 0; k < p; ++k) {
    const auto& xs = coords[static_cast<std::size_t>(k)];
    const double se = stderr_of(xs);
    CHECK(std::abs(mean_of(xs)) < 4 * se + 4 * truth.theta0_se);
  }
}

TEST_CASE("closed-form oracle recovers the truth under a fixed uniform policy") {
  const PlmConfig c = scalar_config();
  const TrueParameters truth = derive_true_parameters(c, 200000, 47);
  const SimulatedRun run = fixed_policy_run(c, {0.5, 0.5}, 40000, 49);

  std::vector<StageStack> stacks;
  std::vector<double> ys;
  for (const EpisodeRecord& ep : run.episodes) {
    const auto moms = stage_moments(run.snapshots[static_cast<std::size_t>(ep.policy_id)],
                                    c.features, ep);
    stacks.push_back(stage_stack(ep, c.features, moms));
    ys.push_back(ep.outcome);
  }
  const ParameterVector theta = closed_form_theta(stacks, ys);
  CHECK((theta.flat - truth.theta.flat).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("closed form matches the two-equation IV algebra at l=1") {
  TinyFixture fix;
  Rng rng(51);
  std::vector<StageStack> stacks;
  std::vector<double> ys;
  double sy = 0, sphi = 0, syc = 0, sphic = 0;
  for (int i = 0; i < 60; ++i) {
    EpisodeRecord ep;
    ep.index = i + 1;
    ep.contexts = {VectorXd::Constant(1, rng.uniform(0.5, 1.5))};
    ep.treatments = {rng.uniform_int(2)};
    ep.outcome = rng.uniform(-1, 3);
    const auto moms = stage_moments(fix.snap, fix.features, ep);
    const StageStack stack = stage_stack(ep, fix.features, moms);
    const double phi = stack.phi[0][0];
    const double q = stack.q[0][0];
    sy += ep.outcome;
    sphi += phi;
    syc += ep.outcome * (phi - q);
    sphic += phi * (phi - q);
    stacks.push_back(stack);
    ys.push_back(ep.outcome);
  }
  const double theta1 = syc / sphic;
  const double theta0 = (sy - theta1 * sphi) / 60.0;
  const ParameterVector theta = closed_form_theta(stacks, ys);
  CHECK(theta.stage(1)[0] == doctest::Approx(theta1).epsilon(1e-10));
  CHECK(theta.theta0() == doctest::Approx(theta0).epsilon(1e-10));
}

TEST_CASE("closed form raises on deterministic-policy data") {
  const PlmConfig c = scalar_config();
  const SimulatedRun run = fixed_policy_run(c, {0.0, 1.0}, 200, 53);
  std::vector<StageStack> stacks;
  std::vector<double> ys;
  for (const EpisodeRecord& ep : run.episodes) {
    const auto moms = stage_moments(run.snapshots[static_cast<std::size_t>(ep.policy_id)],
                                    c.features, ep);
    stacks.push_back(stage_stack(ep, c.features, moms));
    ys.push_back(ep.outcome);
  }
  CHECK_THROWS_AS(closed_form_theta(stacks, ys), SingularSystemError);
}

TEST_CASE("MDS zero mean and cross-stage orthogonality under oracle weights") {
  const PlmConfig c = scalar_config();
  const TrueParameters truth = derive_true_parameters(c, 200000, 57);
  const SimulatedRun run = fixed_policy_run(c, {0.5, 0.5}, 20000, 59);
  const WeightConfig wcfg = default_weight_config(c);

  std::vector<std::vector<double>> xi0, xi1, xi2, cross01, cross12, cross02;
  xi0.resize(1);
  xi1.resize(1);
  xi2.resize(1);
  cross01.resize(1);
  cross12.resize(1);
  cross02.resize(1);
  for (const EpisodeRecord& ep : run.episodes) {
    const auto moms = stage_moments(run.snapshots[static_cast<std::size_t>(ep.policy_id)],
                                    c.features, ep);
    const StageStack stack = stage_stack(ep, c.features, moms);
    std::vector<double> f(static_cast<std::size_t>(c.horizon) + 1);
    for (int j = 0; j <= c.horizon; ++j) f[static_cast<std::size_t>(j)] = c.f_oracle(j, ep.contexts);
    const WeightMatrices w = oracle_weights(moms, f, wcfg);
    const VectorXd xi =
        w.apply(evaluate_moment(stack, ep.outcome, truth.theta).m);
    xi0[0].push_back(xi[0]);
    xi1[0].push_back(xi[1]);
    xi2[0].push_back(xi[2]);
    cross01[0].push_back(xi[0] * xi[1]);
    cross12[0].push_back(xi[1] * xi[2]);
    cross02[0].push_back(xi[0] * xi[2]);
  }
  for (const auto* sample : {&xi0[0], &xi1[0], &xi2[0]})
    CHECK(std::abs(mean_of(*sample)) <
          4 * stderr_of(*sample) + 4 * truth.theta0_se);
  for (const auto* sample : {&cross01[0], &cross12[0], &cross02[0]})
    CHECK(std::abs(mean_of(*sample)) <
          5 * stderr_of(*sample) + 4 * truth.theta0_se);
}
