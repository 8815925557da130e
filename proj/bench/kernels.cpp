#include <benchmark/benchmark.h>

#include "creg/attribution.hpp"
#include "creg/metrics.hpp"
#include "creg/polar.hpp"
#include "creg/reference/serial.hpp"
#include "creg/rng.hpp"

using namespace creg;

namespace {

std::vector<double> values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = uniform01(rng);
  return v;
}

struct CompassCase {
  RelevanceField field;
  GridGeometry geom;
  double d_ab = 200.0;
  PolarConfig cfg;

  explicit CompassCase(std::size_t side) {
    field.grid_h = field.grid_w = side;
    field.values = values(side * side, 1);
    geom = build_grid_geometry(side, side, 640, 640, {300, 330});
  }
};

void BM_compass_parallel(benchmark::State& state) {
  const CompassCase c(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(compass_bin(c.field, c.geom, c.d_ab, c.cfg));
}

void BM_compass_serial(benchmark::State& state) {
  const CompassCase c(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(serial::compass(c.field.values, c.geom.grid_h, c.geom.grid_w, 640, 640, {300, 330},
                                             c.d_ab, c.cfg));
  }
}

TensorBlob attention(std::size_t layers, std::size_t heads, std::size_t tokens) {
  auto v = values(layers * heads * tokens * tokens, 2);
  for (std::size_t row = 0; row < layers * heads * tokens; ++row) {
    double sum = 0.0;
    for (std::size_t j = 0; j < tokens; ++j) sum += v[row * tokens + j];
    for (std::size_t j = 0; j < tokens; ++j) v[row * tokens + j] /= sum;
  }
  return TensorBlob(DType::F64, {layers, heads, tokens, tokens}, std::move(v));
}

void BM_rollout_parallel(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const auto a = attention(4, 4, t);
  for (auto _ : state) benchmark::DoNotOptimize(rollout_raw(a, 1, t - 1, t - 1));
}

void BM_rollout_serial(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const auto a = attention(4, 4, t);
  for (auto _ : state) benchmark::DoNotOptimize(serial::rollout(a, 1, t - 1, t - 1));
}

void BM_gradxact_parallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const TensorBlob h(DType::F64, {n, 256}, values(n * 256, 3));
  const TensorBlob g(DType::F64, {n, 256}, values(n * 256, 4));
  for (auto _ : state) benchmark::DoNotOptimize(gradxact_raw(h, g));
}

void BM_gradxact_serial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const TensorBlob h(DType::F64, {n, 256}, values(n * 256, 3));
  const TensorBlob g(DType::F64, {n, 256}, values(n * 256, 4));
  for (auto _ : state) benchmark::DoNotOptimize(serial::gradxact(h, g));
}

void BM_bootstrap_parallel(benchmark::State& state) {
  const auto v = values(static_cast<std::size_t>(state.range(0)), 5);
  const BootstrapOptions opt;
  for (auto _ : state) benchmark::DoNotOptimize(bootstrap_ci(v, Statistic::Mean, opt));
}

void BM_bootstrap_serial(benchmark::State& state) {
  const auto v = values(static_cast<std::size_t>(state.range(0)), 5);
  const BootstrapOptions opt;
  for (auto _ : state) benchmark::DoNotOptimize(serial::bootstrap(v, opt));
}

}  // namespace

BENCHMARK(BM_compass_parallel)->Arg(32)->Arg(128);
BENCHMARK(BM_compass_serial)->Arg(32)->Arg(128);
BENCHMARK(BM_rollout_parallel)->Arg(64)->Arg(512);
BENCHMARK(BM_rollout_serial)->Arg(64)->Arg(512);
BENCHMARK(BM_gradxact_parallel)->Arg(1024)->Arg(4096);
BENCHMARK(BM_gradxact_serial)->Arg(1024)->Arg(4096);
BENCHMARK(BM_bootstrap_parallel)->Arg(300)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_bootstrap_serial)->Arg(300)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
