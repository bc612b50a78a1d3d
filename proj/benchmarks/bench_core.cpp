#include <benchmark/benchmark.h>

#include "rwz/estimator.hpp"
#include "rwz/inference.hpp"
#include "rwz/model.hpp"

namespace {

using namespace rwz;

PlmConfig bench_config() {
  PlmConfig c;
  c.horizon = 2;
  c.dim = 1;
  c.features.kind = FeatureKind::TreatmentTimesContext;
  c.features.horizon = 2;
  c.features.dim = 1;
  c.features.treatments = TreatmentSpace::arms(2);
  c.features.context_bound = 6.0;
  c.theta_last = VectorXd::Constant(1, 1.0);
  c.omega = VectorXd::Constant(1, 0.5);
  c.beta.kind = BaselineKind::Affine;
  c.beta.linear = MatrixXd::Constant(1, 1, 0.2);
  c.beta.offset = VectorXd::Constant(1, 0.5);
  c.kappa.kind = BaselineKind::Affine;
  c.kappa.linear = VectorXd::Constant(1, 0.3);
  c.kappa.offset = 0.2;
  c.init.kind = InitialDist::Kind::UniformBox;
  c.init.lo = VectorXd::Constant(1, 0.5);
  c.init.hi = VectorXd::Constant(1, 1.5);
  c.eta.kind = NoiseKind::Uniform;
  c.eta.scale = 0.3;
  c.eps.kind = NoiseKind::Uniform;
  c.eps.scale = 0.5;
  c.state_bound = 6.0;
  return c;
}

PolicySnapshot uniform_snapshot(const PlmConfig& c) {
  PolicySnapshot s;
  s.kind = PolicyKind::FixedRandomized;
  s.arm_count = c.features.treatments.count;
  s.fixed_probs = {0.5, 0.5};
  return s;
}

void BM_SimulateEpisode(benchmark::State& state) {
  const PlmConfig c = bench_config();
  const PolicySnapshot snap = uniform_snapshot(c);
  Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(simulate_episode(c, snap, rng));
}
BENCHMARK(BM_SimulateEpisode);

void BM_ConditionalMoments(benchmark::State& state) {
  const PlmConfig c = bench_config();
  const PolicySnapshot snap = uniform_snapshot(c);
  Rng rng(2);
  const EpisodeRecord ep = simulate_episode(c, snap, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(stage_moments(snap, c.features, ep));
}
BENCHMARK(BM_ConditionalMoments);

void BM_InvSqrt3x3(benchmark::State& state) {
  MatrixXd a(3, 3);
  a << 4.0, 0.5, 0.2, 0.5, 3.0, 0.1, 0.2, 0.1, 2.0;
  for (auto _ : state) benchmark::DoNotOptimize(inv_sqrt(a, 1e-12));
}
BENCHMARK(BM_InvSqrt3x3);

void BM_ConsistentSolve(benchmark::State& state) {
  const PlmConfig c = bench_config();
  PolicyFamilyConfig pf;
  pf.kind = PolicyKind::FixedRandomized;
  PolicyFamily family(pf, &c.features);
  const SimulatedRun run =
      simulate_run(c, family, static_cast<int>(state.range(0)), 3);
  EstimationInput input;
  input.episodes = run.episodes;
  input.snapshots = run.snapshots;
  input.features = &c.features;
  SchemeSpec scheme;
  scheme.scheme = WeightScheme::Consistent;
  scheme.weights.sigma2_floor = 0.02;
  scheme.weights.m2_cap = 100.0;
  for (auto _ : state) benchmark::DoNotOptimize(solve(input, scheme));
}
BENCHMARK(BM_ConsistentSolve)->Arg(1000)->Arg(4000);

void BM_BandQuantile(benchmark::State& state) {
  ZEstimate est;
  est.theta_hat = ParameterVector::from_flat(2, 1, VectorXd::Zero(3));
  est.b_n = MatrixXd::Identity(3, 3);
  est.event_ok = true;
  est.n = 2000;
  est.alpha = 0.0;
  for (auto _ : state)
    benchmark::DoNotOptimize(confidence_band(est, 0.05, 100000, 7));
}
BENCHMARK(BM_BandQuantile);

}  // namespace

BENCHMARK_MAIN();
