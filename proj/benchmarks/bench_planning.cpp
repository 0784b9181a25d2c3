#include <benchmark/benchmark.h>

#include "tsearch/cnn.hpp"
#include "tsearch/encoding.hpp"
#include "tsearch/phd.hpp"
#include "tsearch/planners.hpp"
#include "tsearch/train.hpp"
#include "tsearch/world.hpp"

using namespace tsearch;

namespace {

// A filter state resembling mid-episode: background mass plus a few peaks.
ParticleSet sample_particles(std::uint64_t seed) {
  Environment env;
  Rng rng(seed);
  ParticleSet p = make_uniform_particles(3500, 6.0, env, 5000, rng);
  const Vec2 peaks[] = {{60, 70}, {190, 120}, {120, 210}};
  for (const Vec2& c : peaks)
    for (int i = 0; i < 500; ++i)
      p.push_back(env.clamp({c.x + 3.0 * standard_normal(rng), c.y + 3.0 * standard_normal(rng)}), 2e-3);
  return p;
}

void BM_ExtractClusters(benchmark::State& state) {
  const ParticleSet p = sample_particles(1);
  const int k = choose_k(p);
  Rng rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(extract_clusters(p, k, rng));
}
BENCHMARK(BM_ExtractClusters)->Unit(benchmark::kMicrosecond);

void BM_AsSelect(benchmark::State& state) {
  const ParticleSet p = sample_particles(1);
  Rng rng(2);
  const auto clusters = extract_clusters(p, choose_k(p), rng);
  const CandidateSet c = as_candidates({130, 130}, static_cast<int>(state.range(0)), 9.0, Environment{});
  for (auto _ : state) benchmark::DoNotOptimize(as_select(clusters, c, SensorConfig{}));
}
BENCHMARK(BM_AsSelect)->Arg(4)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_AsiSelect(benchmark::State& state) {
  const ParticleSet p = sample_particles(1);
  Rng rng(2);
  const auto clusters = extract_clusters(p, choose_k(p), rng);
  const CandidateSet c = asi_candidates(Environment{}, static_cast<double>(state.range(0)), {10, 10});
  const AgentState a{{100, 100}, {0, 0}};
  for (auto _ : state) benchmark::DoNotOptimize(asi_select(a, clusters, c, SensorConfig{}, AsiParams{}, ControllerConfig{}));
}
BENCHMARK(BM_AsiSelect)->Arg(80)->Arg(60)->Arg(40)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_CnnEncodeAndInfer(benchmark::State& state) {
  Rng rng(3);
  const InferenceModel model(CnnModel::initialize(rng));
  const ParticleSet p = sample_particles(1);
  VisitMap visits;
  visit_update(visits, {10, 10});
  const Environment env;
  for (auto _ : state) {
    const GridEncoding e = encode(visits, p, {130, 130}, EncodingConfig{});
    benchmark::DoNotOptimize(predict_waypoint(model, e, env));
  }
}
BENCHMARK(BM_CnnEncodeAndInfer)->Unit(benchmark::kMicrosecond);

void BM_PhdCycle(benchmark::State& state) {
  const Environment env;
  const SensorConfig sensor;
  const std::vector<Vec2> targets{{60, 70}, {70, 60}, {80, 75}};
  Rng rng(4);
  ParticleSet p = sample_particles(1);
  for (auto _ : state) {
    const auto z = sample_measurements(targets, {65, 65}, sensor, rng);
    p = predict(std::move(p), 0.999, BirthConfig{0.05, 250}, env, rng);
    p = update(std::move(p), z, {65, 65}, sensor);
    p = resample(p, rng);
  }
}
BENCHMARK(BM_PhdCycle)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
