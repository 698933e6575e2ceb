#include "shiftdet/detector.hpp"

#include <chrono>

#include "shiftdet/formats.hpp"

namespace shiftdet {

namespace {

// Proposals decoded from non-finite RPN outputs are meaningless.
void require_finite(const RpnOutput<float>& out) {
  if (!out.logits.all_finite() || !out.deltas.all_finite()) throw NumericError("non-finite RPN output");
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Pools the rois of every frame into one [R,C,P,P] tensor.
TensorF align_all(const TensorF& features, const std::vector<std::vector<Box>>& rois, const RoiAlignArgs& args,
                  std::vector<std::int64_t>& offsets) {
  offsets.assign(1, 0);
  for (const auto& r : rois) offsets.push_back(offsets.back() + static_cast<std::int64_t>(r.size()));
  const auto total = offsets.back();
  const auto c = features.dim(1);
  const std::int64_t p = args.pooled_size;
  if (total == 0) return {};
  TensorF out({total, c, p, p});
  const auto per_roi = c * p * p;
  for (std::size_t f = 0; f < rois.size(); ++f) {
    if (rois[f].empty()) continue;
    auto pooled = roi_align(features, static_cast<std::int64_t>(f), std::span<const Box>(rois[f]), args);
    std::copy(pooled.ptr(), pooled.ptr() + pooled.size(), out.ptr() + offsets[f] * per_roi);
  }
  return out;
}

}  // namespace

StageTimings& StageTimings::operator+=(const StageTimings& o) {
  backbone += o.backbone;
  rpn += o.rpn;
  roi_head += o.roi_head;
  postprocess += o.postprocess;
  return *this;
}

Detector::Detector(ModelConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))),
      backbone_(cfg_.backbone),
      rpn_(cfg_.backbone.out_channels(), cfg_.rpn.anchors_per_location()),
      rcnn_(cfg_.backbone.out_channels(), cfg_.roi.pooled_size, cfg_.roi.hidden, cfg_.num_classes()) {
  const int stride = cfg_.backbone.total_stride();
  grid_ = generate_anchors(cfg_.feature_height(), cfg_.feature_width(), stride, cfg_.rpn.anchor_scales,
                           cfg_.rpn.anchor_ratios);
  align_ = {cfg_.roi.pooled_size, 1.0 / stride, cfg_.roi.sampling_ratio};
}

ParamStore Detector::init_params(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  ParamStore store;
  backbone_.register_params(store, rng);
  rpn_.register_params(store, rng);
  rcnn_.register_params(store, rng);
  return store;
}

void Detector::check_params(const ParamStore& store) const {
  const auto ref = init_params(0);
  if (ref.params().size() != store.params().size()) {
    throw FormatError("parameters: expected " + std::to_string(ref.params().size()) + " tensors, found " +
                      std::to_string(store.params().size()));
  }
  for (std::size_t i = 0; i < ref.params().size(); ++i) {
    const auto& a = ref.params()[i];
    const auto& b = store.params()[i];
    if (a.name != b.name || a.value.shape() != b.value.shape() || a.frozen != b.frozen) {
      throw FormatError("parameters: entry " + std::to_string(i) + " is '" + b.name + "' " +
                        to_string(b.value.shape()) + ", expected '" + a.name + "' " + to_string(a.value.shape()));
    }
  }
}

LossParts Detector::forward_backward(ParamStore& store, const ClipBatch& batch, std::mt19937_64& rng) const {
  const auto k = static_cast<std::size_t>(batch.frames.dim(0));
  if (batch.truth.size() != k) throw ContractError("forward_backward: one ground-truth set per frame required");

  BackboneTape<float> btape;
  const auto features = backbone_.forward(store, batch.frames, &btape);
  RpnTape<float> rtape;
  const auto rpn_out = rpn_.forward(store, features, &rtape);
  require_finite(rpn_out);

  std::vector<AnchorLabels> labels;
  std::vector<std::vector<int>> samples;
  for (std::size_t f = 0; f < k; ++f) {
    labels.push_back(assign_anchors(grid_, batch.truth[f], cfg_.rpn.positive_iou, cfg_.rpn.negative_iou));
    samples.push_back(sample_anchors(labels.back(), cfg_.rpn.sample_size, cfg_.rpn.positive_fraction, rng));
  }
  const auto rpn_l = rpn_loss(rpn_out, std::span<const AnchorLabels>(labels),
                              std::span<const std::vector<int>>(samples));

  const auto proposals = select_proposals(rpn_out, grid_, cfg_.image_width, cfg_.image_height, ProposalMode::train,
                                          cfg_.rpn);
  std::vector<std::vector<Box>> rois(k);
  std::vector<int> roi_labels;
  std::vector<BoxDelta> roi_targets;
  for (std::size_t f = 0; f < k; ++f) {
    auto s = sample_rois(proposals[f], batch.truth[f], cfg_.roi, rng);
    rois[f] = std::move(s.rois);
    roi_labels.insert(roi_labels.end(), s.labels.begin(), s.labels.end());
    roi_targets.insert(roi_targets.end(), s.targets.begin(), s.targets.end());
  }
  std::vector<std::int64_t> offsets;
  const auto aligned = align_all(features, rois, align_, offsets);

  LossParts parts;
  parts.rpn_cls = rpn_l.classification;
  parts.rpn_reg = rpn_l.regression;

  TensorF grad_features;
  if (!aligned.empty()) {
    RcnnTape<float> ctape;
    const auto rcnn_out = rcnn_.forward(store, aligned, &ctape);
    const auto rcnn_l = rcnn_loss(rcnn_out, std::span<const int>(roi_labels),
                                  std::span<const BoxDelta>(roi_targets), std::span<const std::int64_t>(offsets));
    parts.rcnn_cls = rcnn_l.classification;
    parts.rcnn_reg = rcnn_l.regression;
    (void)parts.total();  // throws on a non-finite loss before any gradient is applied

    const auto grad_aligned = rcnn_.backward(store, ctape, rcnn_l.grad_logits, rcnn_l.grad_deltas);
    grad_features = TensorF(features.shape());
    const auto per_roi = grad_aligned.size() / std::max<std::int64_t>(offsets.back(), 1);
    for (std::size_t f = 0; f < k; ++f) {
      if (rois[f].empty()) continue;
      const auto n = static_cast<std::int64_t>(rois[f].size());
      TensorF slice({n, features.dim(1), align_.pooled_size, align_.pooled_size});
      std::copy(grad_aligned.ptr() + offsets[f] * per_roi, grad_aligned.ptr() + offsets[f + 1] * per_roi,
                slice.ptr());
      roi_align_backward(slice, static_cast<std::int64_t>(f), std::span<const Box>(rois[f]), align_, grad_features);
    }
  } else {
    (void)parts.total();
  }

  auto grad_rpn = rpn_.backward(store, rtape, rpn_l.grad_logits, rpn_l.grad_deltas);
  if (!grad_features.empty()) grad_rpn.add_(grad_features);
  backbone_.backward(store, btape, grad_rpn, false);
  return parts;
}

std::vector<std::vector<Detection>> Detector::infer(const ParamStore& store, const TensorF& frames,
                                                    const DecodeOptions& options, StageTimings* timings) const {
  StageTimings local;
  auto start = Clock::now();
  const auto features = backbone_.forward(store, frames, nullptr);
  local.backbone = seconds_since(start);

  start = Clock::now();
  const auto rpn_out = rpn_.forward(store, features, nullptr);
  require_finite(rpn_out);
  const auto proposals = select_proposals(rpn_out, grid_, cfg_.image_width, cfg_.image_height, ProposalMode::infer,
                                          cfg_.rpn);
  local.rpn = seconds_since(start);

  start = Clock::now();
  const auto k = static_cast<std::size_t>(frames.dim(0));
  std::vector<std::vector<Box>> rois(k);
  for (std::size_t f = 0; f < k; ++f) rois[f] = proposals[f].boxes;
  std::vector<std::int64_t> offsets;
  const auto aligned = align_all(features, rois, align_, offsets);
  RcnnOutput<float> out;
  if (!aligned.empty()) out = rcnn_.forward(store, aligned, nullptr);
  local.roi_head = seconds_since(start);

  start = Clock::now();
  std::vector<std::vector<Detection>> result(k);
  const auto c1 = static_cast<std::int64_t>(cfg_.num_classes()) + 1;
  for (std::size_t f = 0; f < k; ++f) {
    const auto n = offsets[f + 1] - offsets[f];
    if (n == 0) continue;
    TensorF logits({n, c1}), deltas({n, 4});
    std::copy(out.class_logits.ptr() + offsets[f] * c1, out.class_logits.ptr() + offsets[f + 1] * c1, logits.ptr());
    std::copy(out.deltas.ptr() + offsets[f] * 4, out.deltas.ptr() + offsets[f + 1] * 4, deltas.ptr());
    result[f] = decode_detections(logits, deltas, rois[f], cfg_.image_width, cfg_.image_height,
                                  static_cast<int>(f), options);
  }
  local.postprocess = seconds_since(start);
  if (timings) *timings = local;
  return result;
}

}  // namespace shiftdet
