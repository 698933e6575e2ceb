#include "shiftdet/postprocess.hpp"

#include <algorithm>
#include <numeric>

#include "shiftdet/ops.hpp"

namespace shiftdet {

std::vector<int> nms(std::span<const Box> boxes, std::span<const double> scores, double iou_threshold) {
  if (boxes.size() != scores.size()) throw ContractError("nms: boxes/scores size mismatch");
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<int> kept;
  std::vector<char> suppressed(boxes.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int cur = order[i];
    if (suppressed[cur]) continue;
    kept.push_back(cur);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const int other = order[j];
      if (!suppressed[other] && iou(boxes[cur], boxes[other]) > iou_threshold) suppressed[other] = 1;
    }
  }
  return kept;
}

std::vector<Detection> decode_detections(const TensorF& class_logits, const TensorF& deltas,
                                         std::span<const Box> proposals, double image_width, double image_height,
                                         int frame_index, const DecodeOptions& options) {
  if (class_logits.rank() != 2 || deltas.rank() != 2 || deltas.dim(1) != 4 ||
      class_logits.dim(0) != static_cast<std::int64_t>(proposals.size()) || deltas.dim(0) != class_logits.dim(0)) {
    throw ContractError("decode_detections: inconsistent shapes " + to_string(class_logits.shape()) + " / " +
                        to_string(deltas.shape()));
  }
  const auto r = class_logits.dim(0);
  const auto classes = class_logits.dim(1) - 1;
  if (r == 0) return {};
  const auto probs = softmax(class_logits);

  std::vector<Box> decoded;
  std::vector<char> usable;
  decoded.reserve(static_cast<std::size_t>(r));
  for (std::int64_t i = 0; i < r; ++i) {
    const BoxDelta d{deltas[i * 4], deltas[i * 4 + 1], deltas[i * 4 + 2], deltas[i * 4 + 3]};
    decoded.push_back(clip_box(decode_box(proposals[static_cast<std::size_t>(i)], d), image_width, image_height));
    usable.push_back(decoded.back().valid() ? 1 : 0);
  }

  std::vector<Detection> out;
  for (std::int64_t c = 1; c <= classes; ++c) {
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (std::int64_t i = 0; i < r; ++i) {
      const double p = probs[i * (classes + 1) + c];
      if (usable[static_cast<std::size_t>(i)] && p >= options.score_threshold) {
        boxes.push_back(decoded[static_cast<std::size_t>(i)]);
        scores.push_back(p);
      }
    }
    for (int k : nms(boxes, scores, options.nms_iou)) {
      out.push_back({frame_index, boxes[static_cast<std::size_t>(k)], static_cast<int>(c),
                     scores[static_cast<std::size_t>(k)]});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  if (static_cast<int>(out.size()) > options.max_per_frame) out.resize(static_cast<std::size_t>(options.max_per_frame));
  return out;
}

std::optional<Detection> top_detection(std::span<const Detection> detections) {
  if (detections.empty()) return std::nullopt;
  const Detection* best = &detections.front();
  for (const auto& d : detections) {
    if (d.score > best->score) best = &d;
  }
  return *best;
}

}  // namespace shiftdet
