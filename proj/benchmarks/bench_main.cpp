#include <benchmark/benchmark.h>

#include <random>

#include "owdetr/engine.hpp"

using namespace owdetr;

namespace {

void BM_Hungarian(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 10);
  std::vector<double> e(n * n);
  for (auto& v : e) v = u(rng);
  const CostMatrix m(n, n, e);
  for (auto _ : state) benchmark::DoNotOptimize(hungarian_solve(m));
}
BENCHMARK(BM_Hungarian)->Arg(8)->Arg(20)->Arg(100);

const Dataset& scenes() {
  static const Dataset data = [] {
    SyntheticConfig c;
    c.train_per_task = 0;
    c.eval_images = 16;
    return generate_synthetic(c);
  }();
  return data;
}

void BM_DetectorForward(benchmark::State& state) {
  RunConfig cfg;
  const Detector model = make_detector(cfg, 4);
  const auto& img = *scenes().eval().front();
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(img.raster));
}
BENCHMARK(BM_DetectorForward)->Unit(benchmark::kMillisecond);

void BM_SelectiveSearch(benchmark::State& state) {
  const RunConfig cfg;
  const auto images = scenes().eval();
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(selective_search(images[i++ % images.size()]->raster, cfg.ss));
}
BENCHMARK(BM_SelectiveSearch)->Unit(benchmark::kMicrosecond);

void BM_VocAp(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  std::vector<GroundTruth> gt;
  std::vector<Detection> dets;
  for (int i = 0; i < n; ++i) {
    gt.push_back({i / 4, 1, {u(rng), u(rng), 0.1, 0.1}});
    for (int k = 0; k < 3; ++k) {
      const auto& g = gt.back();
      dets.push_back({g.image_id, 1, u(rng), {g.box.cx + (u(rng) - 0.5) * 0.1, g.box.cy, 0.1, 0.1}});
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(voc_ap50(dets, gt, 1));
}
BENCHMARK(BM_VocAp)->Arg(100)->Arg(1000);

}  // namespace
BENCHMARK_MAIN();
