#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "shiftdet/box.hpp"
#include "shiftdet/model_config.hpp"
#include "shiftdet/param_store.hpp"
#include "shiftdet/tensor.hpp"

namespace shiftdet {

/// Anchors tiled over a feature grid. Anchor index is
/// ((row * width) + col) * per_location + a, where a enumerates
/// (scale, ratio) pairs scale-major.
struct AnchorGrid {
  std::vector<Box> boxes;
  int height = 0;
  int width = 0;
  int per_location = 0;
  int stride = 0;

  std::size_t size() const noexcept { return boxes.size(); }
};

/// One anchor per (scale, ratio) at every cell, centered at
/// ((col + 0.5) * stride, (row + 0.5) * stride) with side length
/// scale * stride at ratio 1 and constant area across ratios.
AnchorGrid generate_anchors(int feature_height, int feature_width, int stride, std::span<const double> scales,
                            std::span<const double> ratios);

enum class AnchorLabel : std::int8_t { negative = 0, positive = 1, ignore = -1 };

struct AnchorLabels {
  std::vector<AnchorLabel> labels;
  std::vector<int> matched_gt;      // -1 unless positive
  std::vector<BoxDelta> targets;    // meaningful for positives only

  std::size_t count(AnchorLabel which) const;
};

/// Positive: the highest-IoU anchor(s) of some ground-truth box, or IoU above
/// `positive_iou` with any box. Negative: every IoU below `negative_iou`.
/// Everything else is ignored.
AnchorLabels assign_anchors(const AnchorGrid& grid, const BoxSet& gt, double positive_iou = 0.7,
                            double negative_iou = 0.3);

/// Draws up to `sample_size` anchor indices, at most `positive_fraction` of
/// them positive, the rest negative. Returned indices are sorted.
std::vector<int> sample_anchors(const AnchorLabels& labels, int sample_size, double positive_fraction,
                                std::mt19937_64& rng);

template <typename T>
struct RpnOutput {
  Tensor<T> logits;  // [K, 2A, Hf, Wf]; channels (2a, 2a+1) = (background, action)
  Tensor<T> deltas;  // [K, 4A, Hf, Wf]; channels 4a..4a+3 = (dx, dy, dw, dh)
};

template <typename T>
struct RpnTape {
  Tensor<T> features;
  Tensor<T> hidden_pre;
  Tensor<T> hidden;
};

/// Shared 3x3 conv + relu feeding sibling 1x1 objectness and box heads.
template <typename T>
class RpnHead {
 public:
  RpnHead(int channels, int anchors_per_location);

  void register_params(BasicParamStore<T>& store, std::mt19937_64& rng) const;
  RpnOutput<T> forward(const BasicParamStore<T>& store, const Tensor<T>& features, RpnTape<T>* tape) const;
  /// Accumulates parameter gradients and returns the feature gradient.
  Tensor<T> backward(BasicParamStore<T>& store, const RpnTape<T>& tape, const Tensor<T>& grad_logits,
                     const Tensor<T>& grad_deltas) const;

 private:
  int channels_;
  int anchors_;
};

template <typename T>
struct RpnLoss {
  T classification{0};
  T regression{0};
  Tensor<T> grad_logits;
  Tensor<T> grad_deltas;

  T total() const { return classification + regression; }
};

/// Per frame: mean cross-entropy over the sampled anchors plus the mean over
/// sampled positives of their summed smooth-L1 box error; then averaged over
/// the K frames. A frame with no sampled anchors contributes 0.
template <typename T>
RpnLoss<T> rpn_loss(const RpnOutput<T>& out, std::span<const AnchorLabels> labels,
                    std::span<const std::vector<int>> samples);

enum class ProposalMode { train, infer };

/// Decodes every anchor, clips to the image, drops boxes with a side below
/// min_size, runs NMS over the top pre-NMS pool and keeps the cap for the
/// mode. Scores are the action probability. One BoxSet per frame.
template <typename T>
std::vector<BoxSet> select_proposals(const RpnOutput<T>& out, const AnchorGrid& grid, double image_width,
                                     double image_height, ProposalMode mode, const RpnConfig& cfg);

}  // namespace shiftdet
