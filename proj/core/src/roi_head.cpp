#include "shiftdet/roi_head.hpp"

#include <algorithm>
#include <cmath>

#include "shiftdet/ops.hpp"

namespace shiftdet {

namespace {

struct BilinearTap {
  std::int64_t offsets[4];
  double weights[4];
  bool active = false;
};

// Bilinear sample at continuous feature coordinate (y, x) on an HxW plane, in
// the corner-clamped convention: outside [-1, H] x [-1, W] contributes zero.
BilinearTap bilinear_tap(double y, double x, std::int64_t height, std::int64_t width) {
  BilinearTap tap;
  if (y < -1.0 || y > static_cast<double>(height) || x < -1.0 || x > static_cast<double>(width)) return tap;
  y = std::max(y, 0.0);
  x = std::max(x, 0.0);
  auto y_low = static_cast<std::int64_t>(y);
  auto x_low = static_cast<std::int64_t>(x);
  std::int64_t y_high, x_high;
  if (y_low >= height - 1) {
    y_high = y_low = height - 1;
    y = static_cast<double>(y_low);
  } else {
    y_high = y_low + 1;
  }
  if (x_low >= width - 1) {
    x_high = x_low = width - 1;
    x = static_cast<double>(x_low);
  } else {
    x_high = x_low + 1;
  }
  const double ly = y - static_cast<double>(y_low), lx = x - static_cast<double>(x_low);
  const double hy = 1.0 - ly, hx = 1.0 - lx;
  tap.offsets[0] = y_low * width + x_low;
  tap.offsets[1] = y_low * width + x_high;
  tap.offsets[2] = y_high * width + x_low;
  tap.offsets[3] = y_high * width + x_high;
  tap.weights[0] = hy * hx;
  tap.weights[1] = hy * lx;
  tap.weights[2] = ly * hx;
  tap.weights[3] = ly * lx;
  tap.active = true;
  return tap;
}

// All taps of one roi, bin-major: pooled*pooled bins x sr*sr samples.
std::vector<BilinearTap> roi_taps(const Box& roi, const RoiAlignArgs& args, std::int64_t height,
                                  std::int64_t width) {
  if (!roi.valid()) {
    throw ContractError("roi_align: degenerate roi (" + std::to_string(roi.x1) + "," + std::to_string(roi.y1) + "," +
                        std::to_string(roi.x2) + "," + std::to_string(roi.y2) + ")");
  }
  const double start_x = roi.x1 * args.spatial_scale - 0.5;
  const double start_y = roi.y1 * args.spatial_scale - 0.5;
  const double bin_w = roi.width() * args.spatial_scale / args.pooled_size;
  const double bin_h = roi.height() * args.spatial_scale / args.pooled_size;
  const int sr = args.sampling_ratio;
  std::vector<BilinearTap> taps;
  taps.reserve(static_cast<std::size_t>(args.pooled_size * args.pooled_size * sr * sr));
  for (int py = 0; py < args.pooled_size; ++py) {
    for (int px = 0; px < args.pooled_size; ++px) {
      for (int iy = 0; iy < sr; ++iy) {
        const double y = start_y + py * bin_h + (iy + 0.5) * bin_h / sr;
        for (int ix = 0; ix < sr; ++ix) {
          const double x = start_x + px * bin_w + (ix + 0.5) * bin_w / sr;
          taps.push_back(bilinear_tap(y, x, height, width));
        }
      }
    }
  }
  return taps;
}

void check_roi_args(const RoiAlignArgs& args) {
  if (args.pooled_size <= 0 || args.sampling_ratio <= 0 || !(args.spatial_scale > 0)) {
    throw ContractError("roi_align: invalid arguments");
  }
}

}  // namespace

template <typename T>
Tensor<T> roi_align(const Tensor<T>& features, std::int64_t frame, std::span<const Box> rois,
                    const RoiAlignArgs& args) {
  check_roi_args(args);
  if (features.rank() != 4 || frame < 0 || frame >= features.dim(0)) {
    throw ContractError("roi_align: bad features " + to_string(features.shape()) + " / frame " + std::to_string(frame));
  }
  const auto c = features.dim(1), h = features.dim(2), w = features.dim(3);
  const std::int64_t p = args.pooled_size;
  const std::int64_t samples = static_cast<std::int64_t>(args.sampling_ratio) * args.sampling_ratio;
  const double inv = 1.0 / static_cast<double>(samples);
  Tensor<T> out({static_cast<std::int64_t>(rois.size()), c, p, p});
  const T* base = features.ptr() + frame * c * h * w;
  for (std::size_t r = 0; r < rois.size(); ++r) {
    const auto taps = roi_taps(rois[r], args, h, w);
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T* plane = base + ch * h * w;
      T* dst = out.ptr() + (static_cast<std::int64_t>(r) * c + ch) * p * p;
      for (std::int64_t bin = 0; bin < p * p; ++bin) {
        double acc = 0.0;
        for (std::int64_t s = 0; s < samples; ++s) {
          const auto& tap = taps[static_cast<std::size_t>(bin * samples + s)];
          if (!tap.active) continue;
          for (int q = 0; q < 4; ++q) acc += tap.weights[q] * static_cast<double>(plane[tap.offsets[q]]);
        }
        dst[bin] = static_cast<T>(acc * inv);
      }
    }
  }
  return out;
}

template <typename T>
void roi_align_backward(const Tensor<T>& grad_out, std::int64_t frame, std::span<const Box> rois,
                        const RoiAlignArgs& args, Tensor<T>& grad_features) {
  check_roi_args(args);
  const auto c = grad_features.dim(1), h = grad_features.dim(2), w = grad_features.dim(3);
  const std::int64_t p = args.pooled_size;
  require_same_shape(grad_out.shape(), Shape{static_cast<std::int64_t>(rois.size()), c, p, p}, "roi_align_backward");
  const std::int64_t samples = static_cast<std::int64_t>(args.sampling_ratio) * args.sampling_ratio;
  const double inv = 1.0 / static_cast<double>(samples);
  T* base = grad_features.ptr() + frame * c * h * w;
  for (std::size_t r = 0; r < rois.size(); ++r) {
    const auto taps = roi_taps(rois[r], args, h, w);
    for (std::int64_t ch = 0; ch < c; ++ch) {
      T* plane = base + ch * h * w;
      const T* src = grad_out.ptr() + (static_cast<std::int64_t>(r) * c + ch) * p * p;
      for (std::int64_t bin = 0; bin < p * p; ++bin) {
        const double g = static_cast<double>(src[bin]) * inv;
        if (g == 0.0) continue;
        for (std::int64_t s = 0; s < samples; ++s) {
          const auto& tap = taps[static_cast<std::size_t>(bin * samples + s)];
          if (!tap.active) continue;
          for (int q = 0; q < 4; ++q) plane[tap.offsets[q]] += static_cast<T>(tap.weights[q] * g);
        }
      }
    }
  }
}

template <typename T>
RcnnHead<T>::RcnnHead(int feature_channels, int pooled_size, int hidden, int num_classes)
    : channels_(feature_channels), pooled_(pooled_size), hidden_(hidden), classes_(num_classes) {
  if (feature_channels <= 0 || pooled_size <= 0 || hidden <= 0 || num_classes <= 0) {
    throw ContractError("RcnnHead: invalid sizes");
  }
}

template <typename T>
void RcnnHead<T>::register_params(BasicParamStore<T>& store, std::mt19937_64& rng) const {
  auto init = [&](const std::string& name, std::int64_t out, std::int64_t in, double std_dev) {
    auto& w = store.add(name + ".weight", {out, in});
    std::normal_distribution<double> dist(0.0, std_dev);
    for (auto& v : w.value.values()) v = static_cast<T>(dist(rng));
    store.add(name + ".bias", {out});
  };
  const std::int64_t flat = static_cast<std::int64_t>(channels_) * pooled_ * pooled_;
  init("rcnn.fc1", hidden_, flat, std::sqrt(2.0 / static_cast<double>(flat)));
  init("rcnn.fc2", hidden_, hidden_, std::sqrt(2.0 / hidden_));
  init("rcnn.cls", classes_ + 1, hidden_, 0.01);
  init("rcnn.reg", 4, hidden_, 0.001);
}

template <typename T>
RcnnOutput<T> RcnnHead<T>::forward(const BasicParamStore<T>& store, const Tensor<T>& aligned,
                                   RcnnTape<T>* tape) const {
  if (aligned.rank() != 4 || aligned.dim(1) != channels_ || aligned.dim(2) != pooled_ || aligned.dim(3) != pooled_) {
    throw ContractError("rcnn_forward: unexpected input " + to_string(aligned.shape()));
  }
  Tensor<T> flat = aligned;
  flat.reshape({aligned.dim(0), static_cast<std::int64_t>(channels_) * pooled_ * pooled_});
  auto fc1_pre = linear(flat, store.value("rcnn.fc1.weight"), store.value("rcnn.fc1.bias"));
  auto fc1 = relu(fc1_pre);
  auto fc2_pre = linear(fc1, store.value("rcnn.fc2.weight"), store.value("rcnn.fc2.bias"));
  auto fc2 = relu(fc2_pre);
  RcnnOutput<T> out{linear(fc2, store.value("rcnn.cls.weight"), store.value("rcnn.cls.bias")),
                    linear(fc2, store.value("rcnn.reg.weight"), store.value("rcnn.reg.bias"))};
  if (tape) *tape = {std::move(flat), std::move(fc1_pre), std::move(fc1), std::move(fc2_pre), std::move(fc2)};
  return out;
}

template <typename T>
Tensor<T> RcnnHead<T>::backward(BasicParamStore<T>& store, const RcnnTape<T>& tape, const Tensor<T>& grad_logits,
                                const Tensor<T>& grad_deltas) const {
  auto gc = linear_backward(tape.fc2, store.value("rcnn.cls.weight"), grad_logits);
  auto gr = linear_backward(tape.fc2, store.value("rcnn.reg.weight"), grad_deltas);
  store.accumulate_grad("rcnn.cls.weight", gc.weight);
  store.accumulate_grad("rcnn.cls.bias", gc.bias);
  store.accumulate_grad("rcnn.reg.weight", gr.weight);
  store.accumulate_grad("rcnn.reg.bias", gr.bias);
  gc.input.add_(gr.input);
  auto g2 = linear_backward(tape.fc1, store.value("rcnn.fc2.weight"), relu_backward(tape.fc2_pre, gc.input));
  store.accumulate_grad("rcnn.fc2.weight", g2.weight);
  store.accumulate_grad("rcnn.fc2.bias", g2.bias);
  auto g1 = linear_backward(tape.flat, store.value("rcnn.fc1.weight"), relu_backward(tape.fc1_pre, g2.input));
  store.accumulate_grad("rcnn.fc1.weight", g1.weight);
  store.accumulate_grad("rcnn.fc1.bias", g1.bias);
  g1.input.reshape({tape.flat.dim(0), channels_, pooled_, pooled_});
  return std::move(g1.input);
}

std::size_t RoiSample::foreground_count() const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](int l) { return l > 0; }));
}

RoiSample sample_rois(const BoxSet& proposals, const BoxSet& gt, const RoiHeadConfig& cfg, std::mt19937_64& rng) {
  if (gt.labels.size() != gt.boxes.size()) throw ContractError("sample_rois: ground truth needs one label per box");
  std::vector<Box> pool = proposals.boxes;
  pool.insert(pool.end(), gt.boxes.begin(), gt.boxes.end());

  std::vector<int> fg, bg;
  std::vector<int> match(pool.size(), -1);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!pool[i].valid()) continue;
    double best = 0.0;
    for (std::size_t k = 0; k < gt.size(); ++k) {
      const double o = iou(pool[i], gt.boxes[k]);
      if (o > best) {
        best = o;
        match[i] = static_cast<int>(k);
      }
    }
    if (match[i] >= 0 && best >= cfg.foreground_iou) {
      fg.push_back(static_cast<int>(i));
    } else if (best < cfg.background_iou) {
      bg.push_back(static_cast<int>(i));
    }
  }
  const auto fg_cap = static_cast<std::size_t>(std::floor(cfg.rois_per_frame * cfg.foreground_fraction));
  std::shuffle(fg.begin(), fg.end(), rng);
  if (fg.size() > fg_cap) fg.resize(fg_cap);
  std::shuffle(bg.begin(), bg.end(), rng);
  const std::size_t bg_count = std::min(bg.size(), static_cast<std::size_t>(cfg.rois_per_frame) - fg.size());
  bg.resize(bg_count);

  RoiSample s;
  for (int i : fg) {
    const auto& target = gt.boxes[static_cast<std::size_t>(match[static_cast<std::size_t>(i)])];
    s.rois.push_back(pool[static_cast<std::size_t>(i)]);
    s.labels.push_back(gt.labels[static_cast<std::size_t>(match[static_cast<std::size_t>(i)])]);
    s.targets.push_back(encode_box(pool[static_cast<std::size_t>(i)], target));
  }
  for (int i : bg) {
    s.rois.push_back(pool[static_cast<std::size_t>(i)]);
    s.labels.push_back(0);
    s.targets.push_back({0, 0, 0, 0});
  }
  return s;
}

template <typename T>
RcnnLoss<T> rcnn_loss(const RcnnOutput<T>& out, std::span<const int> labels, std::span<const BoxDelta> targets,
                      std::span<const std::int64_t> frame_offsets) {
  const auto r = out.class_logits.dim(0);
  const auto c1 = out.class_logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != r || static_cast<std::int64_t>(targets.size()) != r ||
      out.deltas.dim(0) != r || frame_offsets.size() < 2 || frame_offsets.back() != r) {
    throw ContractError("rcnn_loss: inconsistent rois/labels/offsets");
  }
  const auto frames = static_cast<std::int64_t>(frame_offsets.size()) - 1;
  const T frame_weight = T{1} / static_cast<T>(frames);
  RcnnLoss<T> loss{T{0}, T{0}, Tensor<T>(out.class_logits.shape()), Tensor<T>(out.deltas.shape())};
  for (std::int64_t f = 0; f < frames; ++f) {
    const auto begin = frame_offsets[static_cast<std::size_t>(f)];
    const auto end = frame_offsets[static_cast<std::size_t>(f) + 1];
    if (end <= begin) continue;
    Tensor<T> logits({end - begin, c1});
    std::copy(out.class_logits.ptr() + begin * c1, out.class_logits.ptr() + end * c1, logits.ptr());
    auto ce = softmax_cross_entropy(logits, labels.subspan(static_cast<std::size_t>(begin),
                                                            static_cast<std::size_t>(end - begin)));
    loss.classification += frame_weight * ce.value;
    for (std::int64_t i = 0; i < ce.grad.size(); ++i) loss.grad_logits[begin * c1 + i] = frame_weight * ce.grad[i];

    std::vector<std::int64_t> fg;
    for (auto i = begin; i < end; ++i) {
      if (labels[static_cast<std::size_t>(i)] > 0) fg.push_back(i);
    }
    if (fg.empty()) continue;
    const auto p = static_cast<std::int64_t>(fg.size());
    Tensor<T> pred({p, 4}), target({p, 4});
    for (std::int64_t s = 0; s < p; ++s) {
      for (int k = 0; k < 4; ++k) {
        pred[s * 4 + k] = out.deltas[fg[static_cast<std::size_t>(s)] * 4 + k];
        target[s * 4 + k] = static_cast<T>(targets[static_cast<std::size_t>(fg[static_cast<std::size_t>(s)])][static_cast<std::size_t>(k)]);
      }
    }
    auto reg = smooth_l1(pred, target, T{1});
    loss.regression += frame_weight * T{4} * reg.value;
    for (std::int64_t s = 0; s < p; ++s) {
      for (int k = 0; k < 4; ++k) {
        loss.grad_deltas[fg[static_cast<std::size_t>(s)] * 4 + k] = frame_weight * T{4} * reg.grad[s * 4 + k];
      }
    }
  }
  return loss;
}

double total_loss(double rpn, double rcnn) {
  if (!std::isfinite(rpn) || !std::isfinite(rcnn)) throw NumericError("total_loss: non-finite stage loss");
  return rpn + rcnn;
}

template Tensor<float> roi_align(const Tensor<float>&, std::int64_t, std::span<const Box>, const RoiAlignArgs&);
template Tensor<double> roi_align(const Tensor<double>&, std::int64_t, std::span<const Box>, const RoiAlignArgs&);
template void roi_align_backward(const Tensor<float>&, std::int64_t, std::span<const Box>, const RoiAlignArgs&,
                                 Tensor<float>&);
template void roi_align_backward(const Tensor<double>&, std::int64_t, std::span<const Box>, const RoiAlignArgs&,
                                 Tensor<double>&);
template class RcnnHead<float>;
template class RcnnHead<double>;
template RcnnLoss<float> rcnn_loss(const RcnnOutput<float>&, std::span<const int>, std::span<const BoxDelta>,
                                   std::span<const std::int64_t>);
template RcnnLoss<double> rcnn_loss(const RcnnOutput<double>&, std::span<const int>, std::span<const BoxDelta>,
                                    std::span<const std::int64_t>);

}  // namespace shiftdet
