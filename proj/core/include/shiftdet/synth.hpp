#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "shiftdet/box.hpp"
#include "shiftdet/formats.hpp"
#include "shiftdet/tensor.hpp"

namespace shiftdet {

class KeyValueConfig;

/// Missing or inconsistent dataset files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MotionClass { move_right, move_left, grow, shrink, fall, still };

std::string_view motion_name(MotionClass c);
/// Accepts the hyphenated names ("move-right", ...). Throws ConfigError.
MotionClass parse_motion(std::string_view name);

struct SynthSpec {
  std::vector<MotionClass> classes{MotionClass::move_right, MotionClass::move_left, MotionClass::grow,
                                   MotionClass::shrink};
  int clips = 100;
  int actors_per_clip = 2;
  int frames_per_clip = 16;
  int height = 64;
  int width = 64;
  double noise_std = 0.02;
  std::uint64_t seed = 42;
  double train_fraction = 0.8;
  double min_side = 12;
  double max_side = 20;
  double speed = 2.0;        // px per frame for move-left / move-right
  double growth = 1.0;       // side change in px per frame for grow / shrink
  double fall_accel = 0.25;  // px per frame^2
  int max_retries = 200;

  std::vector<std::string> class_names() const;
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

SynthSpec synth_spec_from(const KeyValueConfig& kv);

struct FrameAnnotation {
  int frame = 0;
  BoxSet boxes;  // labels are class ids 1..C; scores unused
};

struct ClipRecord {
  std::string id;
  int frames = 0;
  int height = 0;
  int width = 0;
  std::string frame_file;  // relative to the dataset root
  std::string split;       // "train" or "test"
  std::vector<FrameAnnotation> annotations;  // one per frame, in order
};

struct GeneratedClip {
  ClipRecord record;
  FrameContainer video;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic clip `index` of the dataset described by `spec`; split is
/// assigned by generate_dataset. Throws DataError if actors cannot be placed.
GeneratedClip generate_clip(const SynthSpec& spec, int index);

/// Per-clip train/test assignment: a seeded permutation, the first
/// round(train_fraction * clips) clips are train.
std::vector<std::string> assign_splits(const SynthSpec& spec);

struct DatasetSummary {
  int clips = 0;
  int train_clips = 0;
  int test_clips = 0;
  std::vector<int> actors_per_class;
};

/// Writes manifest.jsonl, classes.txt and clips/clip_XXXX.srvf under root.
DatasetSummary generate_dataset(const SynthSpec& spec, const std::filesystem::path& root, int threads = 1);

std::string manifest_line(const ClipRecord& record);
ClipRecord parse_manifest_line(std::string_view line);

class Dataset {
 public:
  static Dataset load(const std::filesystem::path& root);

  const std::filesystem::path& root() const noexcept { return root_; }
  const std::vector<std::string>& classes() const noexcept { return classes_; }
  const std::vector<ClipRecord>& clips() const noexcept { return clips_; }
  /// Indices of the clips in `split`, in manifest order.
  std::vector<int> split(std::string_view name) const;

  FrameContainer read_video(int clip) const;

 private:
  std::filesystem::path root_;
  std::vector<std::string> classes_;
  std::vector<ClipRecord> clips_;
};

enum class SampleMode { train, infer };

/// One index per each of N equal segments of [0, T).
std::vector<int> sample_frames(int length, int count, SampleMode mode, std::mt19937_64& rng);

/// Half-pixel bilinear resize of [K,C,H,W] frames; boxes are rescaled by the
/// same factors.
TensorF resize_frames(const TensorF& frames, int height, int width, std::vector<BoxSet>* boxes = nullptr);

struct ClipBatch {
  TensorF frames;             // [K,3,H,W] in [0,1]
  std::vector<BoxSet> truth;  // per sampled frame
  std::vector<int> frame_indices;
  std::string clip_id;
};

/// Decodes, samples `count` frames and resizes to height x width.
ClipBatch load_clip(const Dataset& dataset, int clip, int count, SampleMode mode, std::mt19937_64& rng, int height,
                    int width);

/// Builds a batch from an in-memory video and its per-frame annotations.
ClipBatch make_batch(const FrameContainer& video, const std::vector<FrameAnnotation>& annotations,
                     const std::vector<int>& frame_indices, int height, int width, std::string clip_id);

}  // namespace shiftdet
