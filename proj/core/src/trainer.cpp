#include "shiftdet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "shiftdet/config.hpp"
#include "shiftdet/parallel.hpp"

namespace shiftdet {

namespace {

constexpr int kLogSchema = 1;

std::uint64_t clip_seed(std::uint64_t seed, int epoch, int clip) {
  return splitmix64(seed ^ splitmix64((static_cast<std::uint64_t>(epoch) << 32) | static_cast<std::uint32_t>(clip)));
}

void add_loss(LossParts& acc, const LossParts& x) {
  acc.rpn_cls += x.rpn_cls;
  acc.rpn_reg += x.rpn_reg;
  acc.rcnn_cls += x.rcnn_cls;
  acc.rcnn_reg += x.rcnn_reg;
}

std::string describe(const StepRecord& r) {
  std::ostringstream os;
  os << "step " << r.step << " epoch " << r.epoch << " lr " << r.lr << " rpn_cls " << r.loss.rpn_cls << " rpn_reg "
     << r.loss.rpn_reg << " rcnn_cls " << r.loss.rcnn_cls << " rcnn_reg " << r.loss.rcnn_reg;
  return os.str();
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const char* field) { throw ConfigError(std::string("train.") + field + ": must be positive"); };
  if (epochs <= 0) fail("epochs");
  if (!(base_lr > 0)) fail("base_lr");
  if (!(decay_factor > 0)) fail("decay_factor");
  if (decay_every <= 0) fail("decay_every");
  if (batch_size <= 0) fail("batch_size");
  if (accum_steps <= 0) fail("accum_steps");
  if (eval_every <= 0) fail("eval_every");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("train.momentum: must be in [0, 1)");
  if (threads < 0) throw ConfigError("train.threads: must be non-negative");
  if (eval_split != "train" && eval_split != "test") throw ConfigError("train.eval_split: must be train or test");
}

TrainConfig train_config_from(const KeyValueConfig& kv) {
  kv.require_known("train", {"epochs", "base_lr", "decay_factor", "decay_every", "batch_size", "accum_steps", "seed",
                             "eval_every", "momentum", "threads", "eval_split"});
  TrainConfig c;
  c.epochs = kv.get_int("train.epochs", c.epochs);
  c.base_lr = kv.get_double("train.base_lr", c.base_lr);
  c.decay_factor = kv.get_double("train.decay_factor", c.decay_factor);
  c.decay_every = kv.get_int("train.decay_every", c.decay_every);
  c.batch_size = kv.get_int("train.batch_size", c.batch_size);
  c.accum_steps = kv.get_int("train.accum_steps", c.accum_steps);
  c.seed = kv.get_u64("train.seed", c.seed);
  c.eval_every = kv.get_int("train.eval_every", c.eval_every);
  c.momentum = kv.get_double("train.momentum", c.momentum);
  c.threads = kv.get_int("train.threads", c.threads);
  c.eval_split = kv.get_string("train.eval_split", c.eval_split);
  c.validate();
  return c;
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ContractError("lr_schedule: negative epoch");
  return cfg.base_lr * std::pow(cfg.decay_factor, epoch / cfg.decay_every);
}

std::string StepRecord::to_record() const {
  nlohmann::json j{{"schema", kLogSchema}, {"kind", "step"},           {"step", step},
                   {"epoch", epoch},       {"lr", lr},                 {"clips", clips},
                   {"rpn_cls", loss.rpn_cls}, {"rpn_reg", loss.rpn_reg}, {"rcnn_cls", loss.rcnn_cls},
                   {"rcnn_reg", loss.rcnn_reg}, {"total", loss.rpn() + loss.rcnn()}};
  return j.dump();
}

std::string EvalRecord::to_record() const {
  return nlohmann::json{{"schema", kLogSchema}, {"kind", "eval"}, {"epoch", epoch}, {"map", map}}.dump();
}

std::string TrainResult::log_text() const {
  std::string out;
  for (const auto& s : steps) out += s.to_record() + "\n";
  for (const auto& e : evals) out += e.to_record() + "\n";
  return out;
}

LossParts accumulate_gradients(const Detector& detector, ParamStore& store, std::span<const ClipBatch> clips,
                               std::span<const std::uint64_t> seeds, int threads) {
  if (clips.size() != seeds.size()) throw ContractError("accumulate_gradients: one seed per clip required");
  std::vector<ParamStore> buffers(clips.size());
  std::vector<LossParts> losses(clips.size());
  parallel_for(static_cast<std::int64_t>(clips.size()), threads, [&](std::int64_t i) {
    auto& local = buffers[static_cast<std::size_t>(i)];
    local = store;
    local.zero_grad();
    std::mt19937_64 rng(seeds[static_cast<std::size_t>(i)]);
    losses[static_cast<std::size_t>(i)] = detector.forward_backward(local, clips[static_cast<std::size_t>(i)], rng);
  });
  LossParts sum;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    store.add_grads_from(buffers[i]);
    add_loss(sum, losses[i]);
  }
  return sum;
}

void check_vocabulary(const Dataset& dataset, const ModelConfig& model) {
  if (dataset.classes() != model.classes) {
    throw DataError("class vocabulary mismatch: dataset has [" + join(dataset.classes(), ",") + "], model has [" +
                    join(model.classes, ",") + "]");
  }
}

TrainResult train(const Dataset& dataset, const ModelConfig& model, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  check_vocabulary(dataset, model);
  const Detector detector(model);
  const int threads = resolve_threads(cfg.threads);
  const auto train_ids = dataset.split("train");
  const auto eval_ids = dataset.split(cfg.eval_split);
  if (train_ids.empty()) throw DataError("dataset has no train clips");
  if (eval_ids.empty()) throw DataError("dataset has no " + cfg.eval_split + " clips");

  std::vector<FrameContainer> videos(train_ids.size());
  parallel_for(static_cast<std::int64_t>(train_ids.size()), threads, [&](std::int64_t i) {
    videos[static_cast<std::size_t>(i)] = dataset.read_video(train_ids[static_cast<std::size_t>(i)]);
  });

  TrainResult result;
  ParamStore store = detector.init_params(cfg.seed);
  const int K = model.num_frames();
  std::vector<int> order(train_ids.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::mt19937_64 shuffle_rng(splitmix64(cfg.seed + 0x9e37u * static_cast<std::uint64_t>(epoch + 1)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossParts update_loss;
    int update_clips = 0;
    int micro_batches = 0;
    auto apply_update = [&] {
      store.scale_grads(1.0f / static_cast<float>(update_clips));
      StepRecord rec;
      rec.step = store.step_count();
      rec.epoch = epoch;
      rec.lr = lr;
      rec.clips = update_clips;
      rec.loss = {update_loss.rpn_cls / update_clips, update_loss.rpn_reg / update_clips,
                  update_loss.rcnn_cls / update_clips, update_loss.rcnn_reg / update_clips};
      sgd_step(store, lr, cfg.momentum);
      for (const auto& p : store.params()) {
        if (!p.value.all_finite()) throw NumericError("non-finite parameter '" + p.name + "' after " + describe(rec));
      }
      result.steps.push_back(rec);
      if (hooks.on_step) hooks.on_step(rec);
      update_loss = {};
      update_clips = 0;
      micro_batches = 0;
    };

    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const auto end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      std::vector<ClipBatch> batches;
      std::vector<std::uint64_t> seeds;
      for (auto i = begin; i < end; ++i) {
        const int local = order[i];
        const int clip = train_ids[static_cast<std::size_t>(local)];
        const auto& rec = dataset.clips()[static_cast<std::size_t>(clip)];
        const auto seed = clip_seed(cfg.seed, epoch, clip);
        std::mt19937_64 rng(seed);
        const auto indices = sample_frames(rec.frames, K, SampleMode::train, rng);
        batches.push_back(make_batch(videos[static_cast<std::size_t>(local)], rec.annotations, indices,
                                     model.image_height, model.image_width, rec.id));
        seeds.push_back(splitmix64(seed));
      }
      LossParts sum;
      try {
        sum = accumulate_gradients(detector, store, batches, seeds, threads);
      } catch (const NumericError& e) {
        std::ostringstream os;
        os << "non-finite loss at step " << store.step_count() << " epoch " << epoch << " lr " << lr << ": "
           << e.what();
        throw NumericError(os.str());
      }
      add_loss(update_loss, sum);
      update_clips += static_cast<int>(batches.size());
      if (++micro_batches == cfg.accum_steps) apply_update();
    }
    if (update_clips > 0) apply_update();

    const bool last = epoch + 1 == cfg.epochs;
    if ((epoch + 1) % cfg.eval_every == 0 || last) {
      const auto report = evaluate(dataset, cfg.eval_split, model, store, {}, {}, threads);
      EvalRecord ev{epoch, report.map};
      result.evals.push_back(ev);
      if (hooks.on_eval) hooks.on_eval(ev);
      if (report.map >= result.best_map) {
        result.best_map = report.map;
        result.best_epoch = epoch;
        result.best = store;
      }
    }
  }
  result.last = std::move(store);
  return result;
}

MetricsReport evaluate(const Dataset& dataset, std::string_view split, const ModelConfig& model,
                       const ParamStore& params, const DecodeOptions& decode, const EvalOptions& eval, int threads) {
  check_vocabulary(dataset, model);
  const Detector detector(model);
  detector.check_params(params);
  const auto ids = dataset.split(split);
  if (ids.empty()) throw DataError("dataset has no clips in split '" + std::string(split) + "'");
  const int K = model.num_frames();

  std::vector<std::vector<Detection>> per_clip(ids.size());
  std::vector<std::vector<FrameTruth>> truth(ids.size());
  parallel_for(static_cast<std::int64_t>(ids.size()), resolve_threads(threads), [&](std::int64_t i) {
    std::mt19937_64 unused(0);
    const auto batch = load_clip(dataset, ids[static_cast<std::size_t>(i)], K, SampleMode::infer, unused,
                                 model.image_height, model.image_width);
    const auto frames = detector.infer(params, batch.frames, decode);
    for (std::size_t f = 0; f < frames.size(); ++f) {
      for (auto d : frames[f]) {
        d.frame_index = static_cast<int>(i) * K + static_cast<int>(f);
        per_clip[static_cast<std::size_t>(i)].push_back(d);
      }
      truth[static_cast<std::size_t>(i)].push_back({batch.truth[f].boxes, batch.truth[f].labels});
    }
  });
  std::vector<Detection> all;
  std::vector<FrameTruth> all_truth;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    all.insert(all.end(), per_clip[i].begin(), per_clip[i].end());
    all_truth.insert(all_truth.end(), truth[i].begin(), truth[i].end());
  }
  return build_report(all, all_truth, model.classes, eval);
}

}  // namespace shiftdet
