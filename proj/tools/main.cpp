#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "shiftdet/bench.hpp"
#include "shiftdet/config.hpp"
#include "shiftdet/formats.hpp"
#include "shiftdet/parallel.hpp"
#include "shiftdet/trainer.hpp"

namespace fs = std::filesystem;
using namespace shiftdet;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

struct Options {
  std::string config;
  std::string data;
  std::string ckpt;
  std::string out;
  std::string split = "test";
  std::string clip;
  std::string dump;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::optional<double> score_thresh;
  std::optional<double> iou_thresh;
  int clips = 20;
  int warmup = 2;
};

KeyValueConfig load_config(const Options& o) {
  return o.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(o.config);
}

// Model config from the file; the class list defaults to the dataset's.
ModelConfig model_for(const KeyValueConfig& kv, const std::optional<Dataset>& dataset) {
  auto model = model_config_from(kv);
  if (!kv.has("model.classes") && dataset) model.classes = dataset->classes();
  try {
    model.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  return model;
}

int cmd_synth(const Options& o) {
  if (o.out.empty()) throw ConfigError("synth: --out is required");
  auto kv = load_config(o);
  if (o.seed) kv.set("synth.seed", std::to_string(*o.seed));
  const auto spec = synth_spec_from(kv);
  const auto summary = generate_dataset(spec, o.out, resolve_threads(o.threads));
  std::cout << "wrote " << summary.clips << " clips to " << o.out << " (" << summary.train_clips << " train, "
            << summary.test_clips << " test)\n";
  const auto names = spec.class_names();
  for (std::size_t c = 0; c < names.size(); ++c) {
    std::cout << "  " << names[c] << ": " << summary.actors_per_class[c] << " actors\n";
  }
  return kOk;
}

int cmd_train(const Options& o) {
  if (o.data.empty() || o.out.empty()) throw ConfigError("train: --data and --out are required");
  auto kv = load_config(o);
  if (o.seed) kv.set("train.seed", std::to_string(*o.seed));
  if (o.threads > 0) kv.set("train.threads", std::to_string(o.threads));
  const auto dataset = Dataset::load(o.data);
  const auto model = model_for(kv, dataset);
  const auto cfg = train_config_from(kv);

  TrainHooks hooks;
  hooks.on_step = [](const StepRecord& r) {
    if (r.step % 10 == 0) {
      std::printf("step %5lld  epoch %3d  lr %.5f  loss %.4f (rpn %.4f/%.4f rcnn %.4f/%.4f)\n",
                  static_cast<long long>(r.step), r.epoch, r.lr, r.loss.rpn() + r.loss.rcnn(), r.loss.rpn_cls,
                  r.loss.rpn_reg, r.loss.rcnn_cls, r.loss.rcnn_reg);
      std::fflush(stdout);
    }
  };
  hooks.on_eval = [&](const EvalRecord& e) {
    std::printf("eval  epoch %3d  %s mAP %.4f\n", e.epoch, cfg.eval_split.c_str(), e.map);
    std::fflush(stdout);
  };
  const auto result = train(dataset, model, cfg, hooks);
  save_checkpoint(o.out, model, result.best);
  write_text_atomic(o.out + ".log.jsonl", result.log_text());
  std::cout << "best epoch " << result.best_epoch << " mAP " << result.best_map << " -> " << o.out << "\n";
  return kOk;
}

int cmd_eval(const Options& o) {
  if (o.ckpt.empty() || o.data.empty()) throw ConfigError("eval: --ckpt and --data are required");
  const auto ck = load_checkpoint(o.ckpt);
  const auto dataset = Dataset::load(o.data);
  DecodeOptions decode;
  if (o.score_thresh) decode.score_threshold = *o.score_thresh;
  EvalOptions eval;
  if (o.iou_thresh) eval.iou_threshold = *o.iou_thresh;
  const auto report = evaluate(dataset, o.split, ck.config, ck.params, decode, eval, resolve_threads(o.threads));
  std::cout << report.to_text();
  if (!o.out.empty()) {
    write_text_atomic(o.out + ".txt", report.to_text());
    write_text_atomic(o.out + ".jsonl", report.to_records());
  }
  return kOk;
}

int cmd_infer(const Options& o) {
  if (o.ckpt.empty() || o.clip.empty()) throw ConfigError("infer: --ckpt and --clip are required");
  const auto ck = load_checkpoint(o.ckpt);
  const Detector detector(ck.config);
  detector.check_params(ck.params);

  // --clip is either a dataset clip id (with --data) or a frame container path.
  FrameContainer video;
  std::string clip_id = o.clip;
  if (!o.data.empty()) {
    const auto dataset = Dataset::load(o.data);
    check_vocabulary(dataset, ck.config);
    int index = -1;
    for (std::size_t i = 0; i < dataset.clips().size(); ++i) {
      if (dataset.clips()[i].id == o.clip) index = static_cast<int>(i);
    }
    if (index < 0) throw DataError("infer: no clip '" + o.clip + "' in " + o.data);
    video = dataset.read_video(index);
  } else {
    video = decode_frame_container(read_file_bytes(o.clip));
    clip_id = fs::path(o.clip).stem().string();
  }
  if (video.channels != 3) throw DataError("infer: expected 3-channel frames");
  std::mt19937_64 unused(0);
  const int K = ck.config.num_frames();
  const auto indices = sample_frames(static_cast<int>(video.frames), K, SampleMode::infer, unused);
  const auto batch = make_batch(video, {}, indices, ck.config.image_height, ck.config.image_width, clip_id);
  DecodeOptions decode;
  if (o.score_thresh) decode.score_threshold = *o.score_thresh;
  if (o.iou_thresh) decode.nms_iou = *o.iou_thresh;
  const auto dets = detector.infer(ck.params, batch.frames, decode);

  // Boxes are reported in the coordinates of the source video.
  const double sx = static_cast<double>(video.width) / ck.config.image_width;
  const double sy = static_cast<double>(video.height) / ck.config.image_height;
  std::string records;
  for (std::size_t f = 0; f < dets.size(); ++f) {
    for (const auto& d : dets[f]) {
      const auto b = scale_box(d.box, sx, sy);
      nlohmann::json j{{"schema", 1},
                       {"clip", clip_id},
                       {"frame", indices[f]},
                       {"class_id", d.class_id},
                       {"class", ck.config.classes[static_cast<std::size_t>(d.class_id - 1)]},
                       {"score", d.score},
                       {"box", {b.x1, b.y1, b.x2, b.y2}}};
      records += j.dump() + "\n";
    }
  }
  if (o.out.empty()) {
    std::cout << records;
  } else {
    write_text_atomic(o.out, records);
    std::cout << "wrote detections for " << dets.size() << " frames to " << o.out << "\n";
  }

  if (!o.dump.empty()) {
    // Sampled frames with the top detection's outline burned in (white).
    FrameContainer out;
    out.frames = static_cast<std::uint32_t>(indices.size());
    out.height = video.height;
    out.width = video.width;
    out.channels = 3;
    out.samples.resize(static_cast<std::size_t>(out.frames) * 3 * out.height * out.width);
    for (std::uint32_t k = 0; k < out.frames; ++k) {
      const auto t = static_cast<std::uint32_t>(indices[k]);
      for (std::uint32_t c = 0; c < 3; ++c) {
        for (std::uint32_t y = 0; y < out.height; ++y) {
          for (std::uint32_t x = 0; x < out.width; ++x) out.samples[out.index(k, c, y, x)] = video.samples[video.index(t, c, y, x)];
        }
      }
      for (const auto& d : dets[k]) {
        if (d.score < 0.5) continue;
        const auto b = clip_box(scale_box(d.box, sx, sy), out.width, out.height);
        const auto x1 = static_cast<std::uint32_t>(b.x1), y1 = static_cast<std::uint32_t>(b.y1);
        const auto x2 = std::min<std::uint32_t>(static_cast<std::uint32_t>(b.x2), out.width - 1);
        const auto y2 = std::min<std::uint32_t>(static_cast<std::uint32_t>(b.y2), out.height - 1);
        for (std::uint32_t c = 0; c < 3; ++c) {
          for (auto x = x1; x <= x2; ++x) {
            out.samples[out.index(k, c, y1, x)] = 255;
            out.samples[out.index(k, c, y2, x)] = 255;
          }
          for (auto y = y1; y <= y2; ++y) {
            out.samples[out.index(k, c, y, x1)] = 255;
            out.samples[out.index(k, c, y, x2)] = 255;
          }
        }
      }
    }
    write_file_atomic(o.dump, encode_frame_container(out));
  }
  return kOk;
}

int cmd_bench(const Options& o) {
  ModelConfig model;
  ParamStore params;
  if (!o.ckpt.empty()) {
    auto ck = load_checkpoint(o.ckpt);
    model = std::move(ck.config);
    params = std::move(ck.params);
  } else {
    const auto kv = load_config(o);
    model = model_for(kv, std::nullopt);
    if (model.classes.empty()) throw ConfigError("bench: model.classes is required without --ckpt");
    params = Detector(model).init_params(o.seed.value_or(42));
  }
  BenchOptions opts;
  opts.clips = o.clips;
  opts.warmup = o.warmup;
  if (o.score_thresh) opts.decode.score_threshold = *o.score_thresh;
  const auto report = run_bench(model, params, opts);
  std::cout << report.to_text();
  if (!o.out.empty()) write_text_atomic(o.out, report.to_records());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shiftdet: temporal-shift action detector"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key=value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--threads", o.threads, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
  };
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  common(synth);
  synth->add_option("--out", o.out, "dataset directory");
  synth->add_option("--seed", o.seed, "override synth.seed");

  auto* train_cmd = app.add_subcommand("train", "train a detector");
  common(train_cmd);
  train_cmd->add_option("--data", o.data, "dataset directory");
  train_cmd->add_option("--out", o.out, "checkpoint path (log written to <out>.log.jsonl)");
  train_cmd->add_option("--seed", o.seed, "override train.seed");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  common(eval_cmd);
  eval_cmd->add_option("--ckpt", o.ckpt, "checkpoint");
  eval_cmd->add_option("--data", o.data, "dataset directory");
  eval_cmd->add_option("--split", o.split, "train or test");
  eval_cmd->add_option("--out", o.out, "report prefix (<out>.txt, <out>.jsonl)");
  eval_cmd->add_option("--score-thresh", o.score_thresh, "detection score threshold");
  eval_cmd->add_option("--iou-thresh", o.iou_thresh, "matching IoU threshold");

  auto* infer_cmd = app.add_subcommand("infer", "detect actions in one clip");
  common(infer_cmd);
  infer_cmd->add_option("--ckpt", o.ckpt, "checkpoint");
  infer_cmd->add_option("--data", o.data, "dataset directory (then --clip is a clip id)");
  infer_cmd->add_option("--clip", o.clip, "clip id or frame container path");
  infer_cmd->add_option("--out", o.out, "detections file (default: stdout)");
  infer_cmd->add_option("--dump", o.dump, "annotated frame container");
  infer_cmd->add_option("--score-thresh", o.score_thresh, "detection score threshold");
  infer_cmd->add_option("--iou-thresh", o.iou_thresh, "per-class NMS IoU");

  auto* bench_cmd = app.add_subcommand("bench", "measure inference throughput");
  common(bench_cmd);
  bench_cmd->add_option("--ckpt", o.ckpt, "checkpoint (default: random init from --config)");
  bench_cmd->add_option("--clips", o.clips, "timed clips")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--warmup", o.warmup, "untimed warmup clips")->check(CLI::NonNegativeNumber);
  bench_cmd->add_option("--out", o.out, "machine-readable report");
  bench_cmd->add_option("--seed", o.seed, "init seed without --ckpt");
  bench_cmd->add_option("--score-thresh", o.score_thresh, "detection score threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*train_cmd) return cmd_train(o);
    if (*eval_cmd) return cmd_eval(o);
    if (*infer_cmd) return cmd_infer(o);
    if (*bench_cmd) return cmd_bench(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ContractError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
