#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "shiftdet/backbone.hpp"
#include "shiftdet/model_config.hpp"
#include "shiftdet/param_store.hpp"
#include "shiftdet/postprocess.hpp"
#include "shiftdet/roi_head.hpp"
#include "shiftdet/rpn.hpp"
#include "shiftdet/synth.hpp"

namespace shiftdet {

struct LossParts {
  double rpn_cls = 0;
  double rpn_reg = 0;
  double rcnn_cls = 0;
  double rcnn_reg = 0;

  double rpn() const { return rpn_cls + rpn_reg; }
  double rcnn() const { return rcnn_cls + rcnn_reg; }
  double total() const { return total_loss(rpn(), rcnn()); }
};

/// Wall-clock seconds per inference stage.
struct StageTimings {
  double backbone = 0;
  double rpn = 0;
  double roi_head = 0;
  double postprocess = 0;

  double sum() const { return backbone + rpn + roi_head + postprocess; }
  StageTimings& operator+=(const StageTimings& o);
};

/// Two-stage detector: shifted residual backbone, region proposal head and
/// ROI box head over K frames of a clip.
class Detector {
 public:
  explicit Detector(ModelConfig cfg);

  const ModelConfig& config() const noexcept { return cfg_; }
  const AnchorGrid& anchors() const noexcept { return grid_; }

  ParamStore init_params(std::uint64_t seed) const;

  /// Throws FormatError unless `store` has exactly this model's parameter
  /// names and shapes, in order.
  void check_params(const ParamStore& store) const;

  /// Forward pass, losses and backward pass over one clip. Gradients are
  /// added to `store`; proposals are treated as constants.
  LossParts forward_backward(ParamStore& store, const ClipBatch& batch, std::mt19937_64& rng) const;

  /// Detections per frame for frames [K,3,H,W].
  std::vector<std::vector<Detection>> infer(const ParamStore& store, const TensorF& frames,
                                            const DecodeOptions& options = {}, StageTimings* timings = nullptr) const;

 private:
  ModelConfig cfg_;
  Backbone<float> backbone_;
  RpnHead<float> rpn_;
  RcnnHead<float> rcnn_;
  AnchorGrid grid_;
  RoiAlignArgs align_;
};

}  // namespace shiftdet
