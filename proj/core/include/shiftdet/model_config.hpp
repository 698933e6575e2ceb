#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shiftdet/temporal_shift.hpp"

namespace shiftdet {

/// Residual feature extractor: stride-2 stem followed by stages of residual
/// blocks (conv-affine-relu, conv-affine, skip, relu).
struct BackboneConfig {
  std::vector<int> stage_channels{16, 32, 64};
  std::vector<int> blocks_per_stage{1, 1, 1};
  std::vector<int> stage_strides{1, 2, 2};
  int stem_stride = 2;
  ShiftConfig shift;

  int total_stride() const;
  int out_channels() const { return stage_channels.back(); }
  int block_count() const;
  void validate() const;
};

struct RpnConfig {
  std::vector<double> anchor_scales{2.0, 4.0, 8.0};  // multiples of the feature stride
  std::vector<double> anchor_ratios{0.5, 1.0, 2.0};  // width / height
  double positive_iou = 0.7;
  double negative_iou = 0.3;
  int sample_size = 256;
  double positive_fraction = 0.5;
  int pre_nms_top = 2000;
  double nms_iou = 0.7;
  int train_proposals = 256;
  int infer_proposals = 300;
  double min_size = 1.0;

  int anchors_per_location() const {
    return static_cast<int>(anchor_scales.size() * anchor_ratios.size());
  }
  void validate() const;
};

struct RoiHeadConfig {
  int pooled_size = 7;
  int sampling_ratio = 2;
  int hidden = 256;
  int rois_per_frame = 64;
  double foreground_fraction = 0.25;
  double foreground_iou = 0.5;
  double background_iou = 0.5;

  void validate() const;
};

struct ModelConfig {
  std::vector<std::string> classes;  // action classes; background is implicit id 0
  int image_height = 64;
  int image_width = 64;
  BackboneConfig backbone;
  RpnConfig rpn;
  RoiHeadConfig roi;

  int num_classes() const { return static_cast<int>(classes.size()); }
  int num_frames() const { return backbone.shift.num_frames; }
  int feature_height() const;
  int feature_width() const;
  void validate() const;

  /// Canonical `section.key = value` text; identical configs give identical
  /// text, and the checkpoint digest is computed over it.
  std::string canonical() const;
  std::uint64_t digest() const;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(const void* data, std::size_t size);

}  // namespace shiftdet
