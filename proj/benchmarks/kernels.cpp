#include <random>

#include <benchmark/benchmark.h>

#include "shiftdet/detector.hpp"
#include "shiftdet/metrics.hpp"
#include "shiftdet/ops.hpp"
#include "shiftdet/postprocess.hpp"
#include "shiftdet/roi_head.hpp"
#include "shiftdet/synth.hpp"
#include "shiftdet/temporal_shift.hpp"

using namespace shiftdet;

namespace {

TensorF random_tensor(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  TensorF t(shape);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

std::vector<Box> random_boxes(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(0, 48), side(4, 16);
  std::vector<Box> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = pos(rng), y = pos(rng);
    out.push_back({x, y, x + side(rng), y + side(rng)});
  }
  return out;
}

void BM_Conv2d(benchmark::State& state) {
  const auto c = state.range(0);
  const auto x = random_tensor({8, c, 16, 16}, 1);
  const auto w = random_tensor({c, c, 3, 3}, 2);
  const TensorF b({c});
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, {1, 1}));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_Conv2d)->Arg(16)->Arg(32)->Arg(64);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = state.range(0);
  const auto x = random_tensor({8, c, 16, 16}, 1);
  const auto w = random_tensor({c, c, 3, 3}, 2);
  const auto g = random_tensor({8, c, 16, 16}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward(x, w, g, {1, 1}));
}
BENCHMARK(BM_Conv2dBackward)->Arg(16)->Arg(64);

void BM_TemporalShift(benchmark::State& state) {
  const auto x = random_tensor({8, state.range(0), 16, 16}, 4);
  ShiftConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(temporal_shift(x, cfg));
  state.SetBytesProcessed(state.iterations() * x.size() * static_cast<std::int64_t>(sizeof(float)));
}
BENCHMARK(BM_TemporalShift)->Arg(16)->Arg(64);

void BM_RoiAlign(benchmark::State& state) {
  const auto features = random_tensor({8, 64, 8, 8}, 5);
  const auto rois = random_boxes(static_cast<std::size_t>(state.range(0)), 6);
  for (auto _ : state) benchmark::DoNotOptimize(roi_align(features, 3, std::span<const Box>(rois), RoiAlignArgs{}));
}
BENCHMARK(BM_RoiAlign)->Arg(64)->Arg(300);

void BM_Nms(benchmark::State& state) {
  const auto boxes = random_boxes(static_cast<std::size_t>(state.range(0)), 7);
  std::vector<double> scores(boxes.size());
  std::mt19937_64 rng(8);
  for (auto& s : scores) s = std::uniform_real_distribution<double>(0, 1)(rng);
  for (auto _ : state) benchmark::DoNotOptimize(nms(boxes, scores, 0.7));
}
BENCHMARK(BM_Nms)->Arg(300)->Arg(2000);

void BM_AveragePrecision(benchmark::State& state) {
  std::mt19937_64 rng(9);
  std::vector<char> tp(static_cast<std::size_t>(state.range(0)));
  for (auto& t : tp) t = static_cast<char>(rng() % 2);
  for (auto _ : state) benchmark::DoNotOptimize(average_precision(tp, static_cast<int>(tp.size() / 2)));
}
BENCHMARK(BM_AveragePrecision)->Arg(1000)->Arg(100000);

void BM_DetectorInfer(benchmark::State& state) {
  ModelConfig model;
  model.classes = SynthSpec{}.class_names();
  const Detector det(model);
  const auto params = det.init_params(1);
  std::mt19937_64 rng(0);
  const auto clip = generate_clip(SynthSpec{}, 0);
  const auto idx = sample_frames(clip.record.frames, model.num_frames(), SampleMode::infer, rng);
  const auto batch = make_batch(clip.video, clip.record.annotations, idx, 64, 64, clip.record.id);
  for (auto _ : state) benchmark::DoNotOptimize(det.infer(params, batch.frames));
  state.SetItemsProcessed(state.iterations() * model.num_frames());
}
BENCHMARK(BM_DetectorInfer)->Unit(benchmark::kMillisecond);

void BM_DetectorTrainStep(benchmark::State& state) {
  ModelConfig model;
  model.classes = SynthSpec{}.class_names();
  const Detector det(model);
  auto params = det.init_params(1);
  std::mt19937_64 rng(0);
  const auto clip = generate_clip(SynthSpec{}, 0);
  const auto idx = sample_frames(clip.record.frames, model.num_frames(), SampleMode::train, rng);
  const auto batch = make_batch(clip.video, clip.record.annotations, idx, 64, 64, clip.record.id);
  for (auto _ : state) {
    std::mt19937_64 step_rng(1);
    benchmark::DoNotOptimize(det.forward_backward(params, batch, step_rng));
    params.zero_grad();
  }
}
BENCHMARK(BM_DetectorTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
