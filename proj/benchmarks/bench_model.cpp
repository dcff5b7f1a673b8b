#include <benchmark/benchmark.h>

#include "firn/chebyshev.hpp"
#include "firn/graph.hpp"
#include "firn/model.hpp"
#include "firn/synth.hpp"

namespace {

struct Fixture {
  firn::TemporalGraphSample sample;
  firn::Matrix laplacian;

  Fixture() {
    firn::SynthParams p;
    p.n_segments = 1;
    const auto record = firn::generate_segment(p, 0);
    const std::vector<firn::TemporalGraphSample> raw{firn::build_temporal_sample(record)};
    const auto stats = firn::fit_normalization(raw);
    sample = firn::apply_normalization(raw.front(), stats);
    laplacian = firn::scaled_laplacian(sample.adjacency).matrix;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_build_adjacency(benchmark::State& state) {
  firn::SynthParams p;
  const auto record = firn::generate_segment(p, 0);
  for (auto _ : state) benchmark::DoNotOptimize(firn::build_adjacency(record.latitudes, record.longitudes));
}
BENCHMARK(BM_build_adjacency);

void BM_scaled_laplacian(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(firn::scaled_laplacian(f.sample.adjacency));
}
BENCHMARK(BM_scaled_laplacian);

void BM_forward(benchmark::State& state) {
  const auto& f = fixture();
  const auto kind = static_cast<firn::ModelKind>(state.range(0));
  const auto params = firn::initialize_parameters(firn::default_model_config(kind), 1);
  std::vector<firn::Matrix> steps = f.sample.features;
  if (kind == firn::ModelKind::Gcn) {
    firn::Matrix x(256, 12);
    x.setRandom();
    steps = {x};
  }
  const firn::ModelInput input{steps, &f.laplacian};
  for (auto _ : state) benchmark::DoNotOptimize(firn::forward(params, input));
}
BENCHMARK(BM_forward)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_train_step(benchmark::State& state) {
  const auto& f = fixture();
  const auto kind = static_cast<firn::ModelKind>(state.range(0));
  const auto params = firn::initialize_parameters(firn::default_model_config(kind), 1);
  std::vector<firn::Matrix> steps = f.sample.features;
  if (kind == firn::ModelKind::Gcn) {
    firn::Matrix x(256, 12);
    x.setRandom();
    steps = {x};
  }
  const firn::ModelInput input{steps, &f.laplacian};
  auto grad = params.zeros_like();
  firn::ForwardOptions fo;
  fo.training = true;
  for (auto _ : state) {
    grad.set_zero();
    benchmark::DoNotOptimize(firn::loss_and_gradient(params, input, f.sample.targets, fo, grad));
  }
}
BENCHMARK(BM_train_step)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
