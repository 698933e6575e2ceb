#pragma once

#include <optional>
#include <span>
#include <vector>

#include "shiftdet/box.hpp"
#include "shiftdet/tensor.hpp"

namespace shiftdet {

struct Detection {
  int frame_index = 0;
  Box box;
  int class_id = 0;  // 1..C
  double score = 0;  // softmax probability of class_id

  bool operator==(const Detection&) const = default;
};

/// Greedy suppression in descending score order (ties: lower index first).
/// Returns kept indices in that order.
std::vector<int> nms(std::span<const Box> boxes, std::span<const double> scores, double iou_threshold);

struct DecodeOptions {
  double score_threshold = 0.05;
  double nms_iou = 0.5;
  int max_per_frame = 20;
};

/// Softmax over [R,C+1] class logits, background column dropped, class-agnostic
/// deltas applied to each proposal, per-class threshold and NMS, then the
/// global top-k by score.
std::vector<Detection> decode_detections(const TensorF& class_logits, const TensorF& deltas,
                                         std::span<const Box> proposals, double image_width, double image_height,
                                         int frame_index, const DecodeOptions& options = {});

/// Highest-scoring detection; exact ties go to the earlier one.
std::optional<Detection> top_detection(std::span<const Detection> detections);

}  // namespace shiftdet
