#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shiftdet/detector.hpp"

namespace shiftdet {

struct BenchOptions {
  int clips = 20;
  int warmup = 2;
  std::uint64_t seed = 7;
  DecodeOptions decode;
};

struct BenchReport {
  static constexpr int kSchemaVersion = 1;

  std::int64_t params = 0;               // reported parameter count
  std::int64_t count_params = 0;         // closed form from the config
  std::int64_t serialized_elements = 0;  // values in an encoded checkpoint
  int frames_per_clip = 0;
  int clips = 0;
  int warmup = 0;
  std::vector<double> clip_seconds;  // timed region per clip
  double elapsed_seconds = 0;        // sum of clip_seconds
  double fps = 0;                    // frames_per_clip * clips / elapsed_seconds
  StageTimings stages;               // summed over the timed clips
  std::int64_t peak_rss_bytes = 0;

  std::string to_text() const;
  std::string to_records() const;
};

/// Times steady-state inference over synthetic clips generated up front;
/// warmup clips are run first and excluded.
BenchReport run_bench(const ModelConfig& model, const ParamStore& params, const BenchOptions& options = {});

/// Peak resident set size of this process so far, 0 if unknown.
std::int64_t peak_rss_bytes();

}  // namespace shiftdet
