#include <benchmark/benchmark.h>

#include "autolabel/projection.hpp"
#include "autolabel/rng.hpp"

namespace {

using namespace autolabel;

PointCloudFrame random_frame(int n, uint64_t seed) {
  Rng rng(seed);
  PointCloudFrame f;
  f.points.reserve(n);
  for (int i = 0; i < n; ++i)
    f.points.emplace_back(rng.uniform(-50, 50), rng.uniform(-50, 50),
                          rng.uniform(-3, 5));
  return f;
}

CameraCalibration forward_camera() {
  CameraCalibration c;
  c.rotation << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  c.fx = c.fy = 800.0;
  c.cx = 640.0;
  c.cy = 360.0;
  c.width = 1280;
  c.height = 720;
  return c;
}

void BM_ProjectFrame(benchmark::State& state) {
  const auto frame = random_frame(static_cast<int>(state.range(0)), 17);
  const auto calib = forward_camera();
  for (auto _ : state) {
    auto proj = project_frame(frame, calib);
    benchmark::DoNotOptimize(proj.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ProjectFrame)->Arg(10000)->Arg(200000);

}  // namespace

BENCHMARK_MAIN();
