#include <vector>

#include <benchmark/benchmark.h>

#include "posestream/assignment.hpp"
#include "posestream/metrics.hpp"
#include "posestream/random.hpp"
#include "posestream/similarity.hpp"
#include "posestream/simulator.hpp"
#include "posestream/tracker.hpp"
#include "posestream/update.hpp"

using namespace posestream;

namespace {

std::vector<KeypointSet> people(int n, std::uint64_t seed) {
  Rng rng(seed);
  const Intrinsics k = default_intrinsics(512, 512);
  std::vector<KeypointSet> out;
  for (int i = 0; i < n; ++i) {
    PoseState p;
    p.gamma = {rng.uniform(-1.5, 1.5), 0.3, rng.uniform(3.0, 9.0)};
    p.theta[1] = rng.uniform(-1.0, 1.0);
    out.push_back(keypoints_2d(p, k));
  }
  return out;
}

void BM_Hungarian(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(1);
  Eigen::MatrixXd c(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) c(i, j) = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(hungarian(c));
}
BENCHMARK(BM_Hungarian)->Arg(8)->Arg(32)->Arg(128);

void BM_OksMatrix(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = people(n, 2);
  const auto b = people(n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(oks_matrix(a, b));
}
BENCHMARK(BM_OksMatrix)->Arg(8)->Arg(32);

void BM_UpdateStep(benchmark::State& state) {
  const PoseUpdater up;
  const auto frame = SceneGenerator(scenario("crowd_8")).frame(0);
  std::vector<TrackState> tracks;
  for (const auto& a : frame.annotations) tracks.push_back({*a.pose, up.initial_hidden()});
  for (auto _ : state) benchmark::DoNotOptimize(up.step(frame.features, frame.intrinsics, tracks));
}
BENCHMARK(BM_UpdateStep)->Unit(benchmark::kMillisecond);

void BM_TrackerStep(benchmark::State& state) {
  const auto seq = generate(scenario("crowd_8"));
  for (auto _ : state) {
    Tracker tracker{TrackerConfig{}};
    for (const auto& f : seq.frames) benchmark::DoNotOptimize(tracker.step(f));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(seq.frames.size()));
}
BENCHMARK(BM_TrackerStep)->Unit(benchmark::kMillisecond);

void BM_ClearMot(benchmark::State& state) {
  const auto seq = generate(scenario("crowd_8"));
  const auto h = run_stream(seq.frames, TrackerConfig{});
  std::vector<Annotation> gt;
  for (const auto& f : seq.frames) gt.insert(gt.end(), f.annotations.begin(), f.annotations.end());
  std::vector<TrackRecord> preds;
  for (const auto& f : h.frames) preds.insert(preds.end(), f.tracks.begin(), f.tracks.end());
  for (auto _ : state) benchmark::DoNotOptimize(clear_mot(gt, preds));
}
BENCHMARK(BM_ClearMot)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
