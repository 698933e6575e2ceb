#include "shiftdet/bench.hpp"

#include <chrono>
#include <sstream>

#include <sys/resource.h>

#include "json.hpp"
#include "shiftdet/formats.hpp"

namespace shiftdet {

namespace {

// Frames resembling the training data when the model size allows it, noise otherwise.
TensorF bench_frames(const ModelConfig& model, int index, std::uint64_t seed) {
  const int K = model.num_frames();
  SynthSpec spec;
  spec.seed = seed;
  spec.height = model.image_height;
  spec.width = model.image_width;
  spec.frames_per_clip = std::max(K, 16);
  try {
    spec.validate();
    const auto clip = generate_clip(spec, index);
    std::vector<int> indices;
    std::mt19937_64 unused(0);
    indices = sample_frames(spec.frames_per_clip, K, SampleMode::infer, unused);
    return make_batch(clip.video, clip.record.annotations, indices, model.image_height, model.image_width,
                      clip.record.id)
        .frames;
  } catch (const std::exception&) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(index));
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    TensorF frames({K, 3, model.image_height, model.image_width});
    for (auto& v : frames.values()) v = dist(rng);
    return frames;
  }
}

}  // namespace

std::int64_t peak_rss_bytes() {
  rusage usage{};
  if (getrusage(RUSAGE_SELF, &usage) != 0) return 0;
  return static_cast<std::int64_t>(usage.ru_maxrss) * 1024;
}

BenchReport run_bench(const ModelConfig& model, const ParamStore& params, const BenchOptions& options) {
  if (options.clips <= 0 || options.warmup < 0) throw ContractError("bench: clips must be positive");
  const Detector detector(model);
  detector.check_params(params);

  BenchReport r;
  r.params = params.element_count();
  r.count_params = count_params(model);
  r.serialized_elements = decode_checkpoint(encode_checkpoint(model, params)).params.element_count();
  r.frames_per_clip = model.num_frames();
  r.clips = options.clips;
  r.warmup = options.warmup;

  std::vector<TensorF> inputs;
  for (int i = 0; i < options.warmup + options.clips; ++i) inputs.push_back(bench_frames(model, i, options.seed));

  for (int i = 0; i < options.warmup; ++i) detector.infer(params, inputs[static_cast<std::size_t>(i)], options.decode);
  for (int i = 0; i < options.clips; ++i) {
    StageTimings t;
    const auto start = std::chrono::steady_clock::now();
    const auto dets =
        detector.infer(params, inputs[static_cast<std::size_t>(options.warmup + i)], options.decode, &t);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    (void)dets;
    r.clip_seconds.push_back(s);
    r.elapsed_seconds += s;
    r.stages += t;
  }
  r.fps = r.elapsed_seconds > 0 ? r.frames_per_clip * r.clips / r.elapsed_seconds : 0;
  r.peak_rss_bytes = peak_rss_bytes();
  return r;
}

std::string BenchReport::to_text() const {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "params            " << params << " (" << params / 1e6 << " M)\n";
  os << "frames per clip   " << frames_per_clip << "\n";
  os << "timed clips       " << clips << " (warmup " << warmup << ")\n";
  os << "elapsed           " << elapsed_seconds * 1e3 << " ms\n";
  os << "throughput        " << fps << " FPS\n";
  const double per = clips > 0 ? 1e3 / clips : 0;
  os << "per clip latency  backbone " << stages.backbone * per << " ms, rpn " << stages.rpn * per
     << " ms, roi head " << stages.roi_head * per << " ms, postprocess " << stages.postprocess * per << " ms\n";
  os << "peak rss          " << peak_rss_bytes / (1024.0 * 1024.0) << " MiB\n";
  return os.str();
}

std::string BenchReport::to_records() const {
  using nlohmann::json;
  json j{{"schema", kSchemaVersion},
         {"kind", "bench"},
         {"params", params},
         {"count_params", count_params},
         {"serialized_elements", serialized_elements},
         {"frames_per_clip", frames_per_clip},
         {"clips", clips},
         {"warmup", warmup},
         {"clip_seconds", clip_seconds},
         {"elapsed_seconds", elapsed_seconds},
         {"fps", fps},
         {"stage_seconds",
          {{"backbone", stages.backbone},
           {"rpn", stages.rpn},
           {"roi_head", stages.roi_head},
           {"postprocess", stages.postprocess}}},
         {"peak_rss_bytes", peak_rss_bytes}};
  return j.dump() + "\n";
}

}  // namespace shiftdet
