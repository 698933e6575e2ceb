#include "shiftdet/rpn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "shiftdet/ops.hpp"
#include "shiftdet/postprocess.hpp"

namespace shiftdet {

AnchorGrid generate_anchors(int feature_height, int feature_width, int stride, std::span<const double> scales,
                            std::span<const double> ratios) {
  if (feature_height <= 0 || feature_width <= 0 || stride <= 0) {
    throw ContractError("generate_anchors: non-positive grid");
  }
  AnchorGrid grid;
  grid.height = feature_height;
  grid.width = feature_width;
  grid.stride = stride;
  grid.per_location = static_cast<int>(scales.size() * ratios.size());
  grid.boxes.reserve(static_cast<std::size_t>(feature_height * feature_width * grid.per_location));
  for (int i = 0; i < feature_height; ++i) {
    for (int j = 0; j < feature_width; ++j) {
      const double cx = (j + 0.5) * stride;
      const double cy = (i + 0.5) * stride;
      for (double s : scales) {
        const double area = (s * stride) * (s * stride);
        for (double r : ratios) {
          const double h = std::sqrt(area / r);
          const double w = h * r;
          grid.boxes.push_back({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h});
        }
      }
    }
  }
  return grid;
}

std::size_t AnchorLabels::count(AnchorLabel which) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), which));
}

AnchorLabels assign_anchors(const AnchorGrid& grid, const BoxSet& gt, double positive_iou, double negative_iou) {
  const std::size_t n = grid.size();
  AnchorLabels out;
  out.labels.assign(n, AnchorLabel::ignore);
  out.matched_gt.assign(n, -1);
  out.targets.assign(n, BoxDelta{0, 0, 0, 0});
  if (gt.empty()) {
    std::fill(out.labels.begin(), out.labels.end(), AnchorLabel::negative);
    return out;
  }
  const std::size_t g = gt.size();
  std::vector<double> overlaps(n * g);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t k = 0; k < g; ++k) overlaps[a * g + k] = iou(grid.boxes[a], gt.boxes[k]);
  }
  std::vector<double> best_for_gt(g, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t k = 0; k < g; ++k) best_for_gt[k] = std::max(best_for_gt[k], overlaps[a * g + k]);
  }
  for (std::size_t a = 0; a < n; ++a) {
    double best = -1.0;
    int arg = -1;
    for (std::size_t k = 0; k < g; ++k) {
      if (overlaps[a * g + k] > best) {
        best = overlaps[a * g + k];
        arg = static_cast<int>(k);
      }
    }
    bool positive = best > positive_iou;
    int match = arg;
    // Every anchor tying a ground-truth box's highest IoU is positive for it.
    for (std::size_t k = 0; k < g && !positive; ++k) {
      if (best_for_gt[k] > 0.0 && overlaps[a * g + k] >= best_for_gt[k] - 1e-9) {
        positive = true;
        match = static_cast<int>(k);
      }
    }
    if (positive) {
      out.labels[a] = AnchorLabel::positive;
      out.matched_gt[a] = match;
      out.targets[a] = encode_box(grid.boxes[a], gt.boxes[static_cast<std::size_t>(match)]);
    } else if (best < negative_iou) {
      out.labels[a] = AnchorLabel::negative;
    }
  }
  return out;
}

std::vector<int> sample_anchors(const AnchorLabels& labels, int sample_size, double positive_fraction,
                                std::mt19937_64& rng) {
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    if (labels.labels[i] == AnchorLabel::positive) pos.push_back(static_cast<int>(i));
    if (labels.labels[i] == AnchorLabel::negative) neg.push_back(static_cast<int>(i));
  }
  const auto max_pos = static_cast<std::size_t>(std::floor(sample_size * positive_fraction));
  std::shuffle(pos.begin(), pos.end(), rng);
  if (pos.size() > max_pos) pos.resize(max_pos);
  const std::size_t neg_count = std::min(neg.size(), static_cast<std::size_t>(sample_size) - pos.size());
  std::shuffle(neg.begin(), neg.end(), rng);
  neg.resize(neg_count);
  pos.insert(pos.end(), neg.begin(), neg.end());
  std::sort(pos.begin(), pos.end());
  return pos;
}

template <typename T>
RpnHead<T>::RpnHead(int channels, int anchors_per_location) : channels_(channels), anchors_(anchors_per_location) {
  if (channels <= 0 || anchors_per_location <= 0) throw ContractError("RpnHead: invalid sizes");
}

template <typename T>
void RpnHead<T>::register_params(BasicParamStore<T>& store, std::mt19937_64& rng) const {
  auto init = [&](const std::string& name, Shape shape, double std_dev) {
    auto& w = store.add(name + ".weight", shape);
    std::normal_distribution<double> dist(0.0, std_dev);
    for (auto& v : w.value.values()) v = static_cast<T>(dist(rng));
    store.add(name + ".bias", {shape[0]});
  };
  init("rpn.conv", {channels_, channels_, 3, 3}, std::sqrt(2.0 / (channels_ * 9.0)));
  init("rpn.cls", {2 * anchors_, channels_, 1, 1}, 0.01);
  init("rpn.reg", {4 * anchors_, channels_, 1, 1}, 0.01);
}

template <typename T>
RpnOutput<T> RpnHead<T>::forward(const BasicParamStore<T>& store, const Tensor<T>& features,
                                 RpnTape<T>* tape) const {
  auto hidden_pre = conv2d(features, store.value("rpn.conv.weight"), store.value("rpn.conv.bias"), {1, 1});
  auto hidden = relu(hidden_pre);
  RpnOutput<T> out{conv2d(hidden, store.value("rpn.cls.weight"), store.value("rpn.cls.bias"), {1, 0}),
                   conv2d(hidden, store.value("rpn.reg.weight"), store.value("rpn.reg.bias"), {1, 0})};
  if (tape) {
    tape->features = features;
    tape->hidden_pre = std::move(hidden_pre);
    tape->hidden = std::move(hidden);
  }
  return out;
}

template <typename T>
Tensor<T> RpnHead<T>::backward(BasicParamStore<T>& store, const RpnTape<T>& tape, const Tensor<T>& grad_logits,
                               const Tensor<T>& grad_deltas) const {
  auto gc = conv2d_backward(tape.hidden, store.value("rpn.cls.weight"), grad_logits, {1, 0});
  auto gr = conv2d_backward(tape.hidden, store.value("rpn.reg.weight"), grad_deltas, {1, 0});
  store.accumulate_grad("rpn.cls.weight", gc.weight);
  store.accumulate_grad("rpn.cls.bias", gc.bias);
  store.accumulate_grad("rpn.reg.weight", gr.weight);
  store.accumulate_grad("rpn.reg.bias", gr.bias);
  gc.input.add_(gr.input);
  auto dpre = relu_backward(tape.hidden_pre, gc.input);
  auto gh = conv2d_backward(tape.features, store.value("rpn.conv.weight"), dpre, {1, 1});
  store.accumulate_grad("rpn.conv.weight", gh.weight);
  store.accumulate_grad("rpn.conv.bias", gh.bias);
  return std::move(gh.input);
}

template <typename T>
RpnLoss<T> rpn_loss(const RpnOutput<T>& out, std::span<const AnchorLabels> labels,
                    std::span<const std::vector<int>> samples) {
  const auto k = out.logits.dim(0);
  const auto hf = out.logits.dim(2), wf = out.logits.dim(3);
  const auto a_count = out.logits.dim(1) / 2;
  if (out.deltas.dim(1) != 4 * a_count || static_cast<std::int64_t>(labels.size()) != k ||
      static_cast<std::int64_t>(samples.size()) != k) {
    throw ContractError("rpn_loss: inconsistent outputs/labels");
  }
  const auto plane = hf * wf;
  RpnLoss<T> loss{T{0}, T{0}, Tensor<T>(out.logits.shape()), Tensor<T>(out.deltas.shape())};
  const T frame_weight = T{1} / static_cast<T>(k);

  // Anchor index -> (channel offset within frame, spatial position).
  auto cell = [&](int anchor) { return std::pair<std::int64_t, std::int64_t>{anchor % a_count, anchor / a_count}; };

  for (std::int64_t f = 0; f < k; ++f) {
    const auto& lab = labels[static_cast<std::size_t>(f)];
    const auto& idx = samples[static_cast<std::size_t>(f)];
    if (static_cast<std::int64_t>(lab.labels.size()) != plane * a_count) {
      throw ContractError("rpn_loss: anchor count does not match the output grid");
    }
    if (idx.empty()) continue;
    const T* logits = out.logits.ptr() + f * 2 * a_count * plane;
    const T* deltas = out.deltas.ptr() + f * 4 * a_count * plane;
    T* glogits = loss.grad_logits.ptr() + f * 2 * a_count * plane;
    T* gdeltas = loss.grad_deltas.ptr() + f * 4 * a_count * plane;

    Tensor<T> picked({static_cast<std::int64_t>(idx.size()), 2});
    std::vector<int> targets;
    std::vector<int> positives;
    for (std::size_t s = 0; s < idx.size(); ++s) {
      const auto [a, pos] = cell(idx[s]);
      picked[2 * static_cast<std::int64_t>(s)] = logits[(2 * a) * plane + pos];
      picked[2 * static_cast<std::int64_t>(s) + 1] = logits[(2 * a + 1) * plane + pos];
      const bool is_pos = lab.labels[static_cast<std::size_t>(idx[s])] == AnchorLabel::positive;
      targets.push_back(is_pos ? 1 : 0);
      if (is_pos) positives.push_back(idx[s]);
    }
    auto ce = softmax_cross_entropy(picked, targets);
    loss.classification += frame_weight * ce.value;
    for (std::size_t s = 0; s < idx.size(); ++s) {
      const auto [a, pos] = cell(idx[s]);
      glogits[(2 * a) * plane + pos] += frame_weight * ce.grad[2 * static_cast<std::int64_t>(s)];
      glogits[(2 * a + 1) * plane + pos] += frame_weight * ce.grad[2 * static_cast<std::int64_t>(s) + 1];
    }

    if (positives.empty()) continue;
    const auto p = static_cast<std::int64_t>(positives.size());
    Tensor<T> pred({p, 4}), target({p, 4});
    for (std::int64_t s = 0; s < p; ++s) {
      const auto [a, pos] = cell(positives[static_cast<std::size_t>(s)]);
      const auto& t = lab.targets[static_cast<std::size_t>(positives[static_cast<std::size_t>(s)])];
      for (int c = 0; c < 4; ++c) {
        pred[s * 4 + c] = deltas[(4 * a + c) * plane + pos];
        target[s * 4 + c] = static_cast<T>(t[static_cast<std::size_t>(c)]);
      }
    }
    // Element mean times 4 = mean over positives of the per-box sum.
    auto reg = smooth_l1(pred, target, T{1});
    loss.regression += frame_weight * T{4} * reg.value;
    for (std::int64_t s = 0; s < p; ++s) {
      const auto [a, pos] = cell(positives[static_cast<std::size_t>(s)]);
      for (int c = 0; c < 4; ++c) gdeltas[(4 * a + c) * plane + pos] += frame_weight * T{4} * reg.grad[s * 4 + c];
    }
  }
  return loss;
}

template <typename T>
std::vector<BoxSet> select_proposals(const RpnOutput<T>& out, const AnchorGrid& grid, double image_width,
                                     double image_height, ProposalMode mode, const RpnConfig& cfg) {
  const auto k = out.logits.dim(0);
  const auto a_count = static_cast<std::int64_t>(grid.per_location);
  const auto plane = static_cast<std::int64_t>(grid.height) * grid.width;
  if (out.logits.dim(1) != 2 * a_count || out.logits.dim(2) * out.logits.dim(3) != plane) {
    throw ContractError("select_proposals: output grid does not match anchors");
  }
  const int cap = mode == ProposalMode::train ? cfg.train_proposals : cfg.infer_proposals;
  std::vector<BoxSet> result(static_cast<std::size_t>(k));
  for (std::int64_t f = 0; f < k; ++f) {
    const T* logits = out.logits.ptr() + f * 2 * a_count * plane;
    const T* deltas = out.deltas.ptr() + f * 4 * a_count * plane;
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (std::int64_t anchor = 0; anchor < static_cast<std::int64_t>(grid.size()); ++anchor) {
      const auto a = anchor % a_count, pos = anchor / a_count;
      const BoxDelta d{static_cast<double>(deltas[(4 * a) * plane + pos]),
                       static_cast<double>(deltas[(4 * a + 1) * plane + pos]),
                       static_cast<double>(deltas[(4 * a + 2) * plane + pos]),
                       static_cast<double>(deltas[(4 * a + 3) * plane + pos])};
      const Box b = clip_box(decode_box(grid.boxes[static_cast<std::size_t>(anchor)], d), image_width, image_height);
      if (b.width() < cfg.min_size || b.height() < cfg.min_size) continue;
      const double margin = static_cast<double>(logits[(2 * a + 1) * plane + pos]) -
                            static_cast<double>(logits[(2 * a) * plane + pos]);
      boxes.push_back(b);
      scores.push_back(1.0 / (1.0 + std::exp(-margin)));
    }
    std::vector<int> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return scores[x] > scores[y]; });
    if (static_cast<int>(order.size()) > cfg.pre_nms_top) order.resize(static_cast<std::size_t>(cfg.pre_nms_top));
    std::vector<Box> pool_boxes;
    std::vector<double> pool_scores;
    for (int i : order) {
      pool_boxes.push_back(boxes[static_cast<std::size_t>(i)]);
      pool_scores.push_back(scores[static_cast<std::size_t>(i)]);
    }
    auto keep = nms(pool_boxes, pool_scores, cfg.nms_iou);
    if (static_cast<int>(keep.size()) > cap) keep.resize(static_cast<std::size_t>(cap));
    auto& set = result[static_cast<std::size_t>(f)];
    for (int i : keep) {
      set.boxes.push_back(pool_boxes[static_cast<std::size_t>(i)]);
      set.scores.push_back(pool_scores[static_cast<std::size_t>(i)]);
    }
  }
  return result;
}

template class RpnHead<float>;
template class RpnHead<double>;
template RpnLoss<float> rpn_loss(const RpnOutput<float>&, std::span<const AnchorLabels>,
                                 std::span<const std::vector<int>>);
template RpnLoss<double> rpn_loss(const RpnOutput<double>&, std::span<const AnchorLabels>,
                                  std::span<const std::vector<int>>);
template std::vector<BoxSet> select_proposals(const RpnOutput<float>&, const AnchorGrid&, double, double,
                                              ProposalMode, const RpnConfig&);
template std::vector<BoxSet> select_proposals(const RpnOutput<double>&, const AnchorGrid&, double, double,
                                              ProposalMode, const RpnConfig&);

}  // namespace shiftdet
