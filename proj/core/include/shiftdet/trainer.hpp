#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shiftdet/detector.hpp"
#include "shiftdet/metrics.hpp"
#include "shiftdet/synth.hpp"

namespace shiftdet {

class KeyValueConfig;

struct TrainConfig {
  int epochs = 30;
  double base_lr = 0.01;
  double decay_factor = 0.1;
  int decay_every = 25;
  int batch_size = 4;
  int accum_steps = 3;
  std::uint64_t seed = 42;
  int eval_every = 5;
  double momentum = 0.9;
  int threads = 0;  // 0: all cores
  std::string eval_split = "test";

  int effective_batch() const { return batch_size * accum_steps; }
  void validate() const;
};

TrainConfig train_config_from(const KeyValueConfig& kv);

/// base_lr * decay_factor^floor(epoch / decay_every).
double lr_schedule(int epoch, const TrainConfig& cfg);

struct StepRecord {
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0;
  int clips = 0;
  LossParts loss;  // mean over the clips of the update

  std::string to_record() const;
};

struct EvalRecord {
  int epoch = 0;
  double map = 0;

  std::string to_record() const;
};

struct TrainResult {
  ParamStore best;
  int best_epoch = -1;
  double best_map = -1;
  ParamStore last;
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;

  /// Line-delimited training log (step records then eval records, in order).
  std::string log_text() const;
};

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EvalRecord&)> on_eval;
};

/// Forward/backward of every clip in its own gradient buffer, then the
/// buffers are added into `store` in clip order so the result does not
/// depend on the thread count. Returns the summed losses.
LossParts accumulate_gradients(const Detector& detector, ParamStore& store, std::span<const ClipBatch> clips,
                               std::span<const std::uint64_t> seeds, int threads);

/// Trains from a fresh initialisation seeded by cfg.seed.
TrainResult train(const Dataset& dataset, const ModelConfig& model, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

/// Throws DataError when the dataset's class list differs from the model's.
void check_vocabulary(const Dataset& dataset, const ModelConfig& model);

/// Inference, decoding and metrics over every clip of `split` with the
/// centred frame sampling.
MetricsReport evaluate(const Dataset& dataset, std::string_view split, const ModelConfig& model,
                       const ParamStore& params, const DecodeOptions& decode = {}, const EvalOptions& eval = {},
                       int threads = 1);

}  // namespace shiftdet
