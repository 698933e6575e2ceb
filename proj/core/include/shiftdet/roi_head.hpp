#pragma once

#include <random>
#include <span>
#include <vector>

#include "shiftdet/box.hpp"
#include "shiftdet/model_config.hpp"
#include "shiftdet/param_store.hpp"
#include "shiftdet/tensor.hpp"

namespace shiftdet {

struct RoiAlignArgs {
  int pooled_size = 7;
  double spatial_scale = 1.0 / 8.0;
  int sampling_ratio = 2;
};

/// Bilinear ROI pooling of boxes (pixel coordinates) over frame `frame` of a
/// [K,C,H,W] feature tensor into [R,C,pooled,pooled]. Feature cell (i,j) is
/// centred at continuous coordinate (j + 0.5, i + 0.5) in feature space; each
/// bin averages sampling_ratio^2 regularly spaced samples.
template <typename T>
Tensor<T> roi_align(const Tensor<T>& features, std::int64_t frame, std::span<const Box> rois,
                    const RoiAlignArgs& args);

/// Scatters the pooled gradient back into `grad_features` (same shape as the
/// forward features), accumulating.
template <typename T>
void roi_align_backward(const Tensor<T>& grad_out, std::int64_t frame, std::span<const Box> rois,
                        const RoiAlignArgs& args, Tensor<T>& grad_features);

template <typename T>
struct RcnnOutput {
  Tensor<T> class_logits;  // [R, C+1]
  Tensor<T> deltas;        // [R, 4], class agnostic
};

template <typename T>
struct RcnnTape {
  Tensor<T> flat;
  Tensor<T> fc1_pre;
  Tensor<T> fc1;
  Tensor<T> fc2_pre;
  Tensor<T> fc2;
};

/// Flatten, two relu fully connected layers, sibling classification and box heads.
template <typename T>
class RcnnHead {
 public:
  RcnnHead(int feature_channels, int pooled_size, int hidden, int num_classes);

  void register_params(BasicParamStore<T>& store, std::mt19937_64& rng) const;
  RcnnOutput<T> forward(const BasicParamStore<T>& store, const Tensor<T>& aligned, RcnnTape<T>* tape) const;
  /// Accumulates parameter gradients; returns the gradient w.r.t. `aligned`.
  Tensor<T> backward(BasicParamStore<T>& store, const RcnnTape<T>& tape, const Tensor<T>& grad_logits,
                     const Tensor<T>& grad_deltas) const;

 private:
  int channels_;
  int pooled_;
  int hidden_;
  int classes_;
};

/// Training batch of one frame: sampled rois with class labels (0 is
/// background) and box targets for foreground rois.
struct RoiSample {
  std::vector<Box> rois;
  std::vector<int> labels;
  std::vector<BoxDelta> targets;

  std::size_t foreground_count() const;
};

/// Appends the ground-truth boxes to the proposal pool, labels each candidate
/// by its best-IoU ground truth and draws up to rois_per_frame rois with at
/// most foreground_fraction foreground.
RoiSample sample_rois(const BoxSet& proposals, const BoxSet& gt, const RoiHeadConfig& cfg, std::mt19937_64& rng);

template <typename T>
struct RcnnLoss {
  T classification{0};
  T regression{0};
  Tensor<T> grad_logits;
  Tensor<T> grad_deltas;

  T total() const { return classification + regression; }
};

/// Per frame: mean cross-entropy over its rois plus the mean over foreground
/// rois of their summed smooth-L1 box error, averaged over the frames.
/// `frame_offsets` has one more entry than frames; frame f owns rows
/// [offsets[f], offsets[f+1]).
template <typename T>
RcnnLoss<T> rcnn_loss(const RcnnOutput<T>& out, std::span<const int> labels, std::span<const BoxDelta> targets,
                      std::span<const std::int64_t> frame_offsets);

/// Sum of the two stage losses. Throws NumericError on a non-finite input.
double total_loss(double rpn, double rcnn);

}  // namespace shiftdet
