#include "shiftdet/backbone.hpp"

#include <cmath>

#include "shiftdet/ops.hpp"
#include "shiftdet/temporal_shift.hpp"

namespace shiftdet {

namespace {

template <typename T>
void add_conv_unit(BasicParamStore<T>& store, const std::string& prefix, int in, int out, int kernel,
                   std::mt19937_64& rng) {
  auto& w = store.add(prefix + ".weight", {out, in, kernel, kernel});
  const double std_dev = std::sqrt(2.0 / static_cast<double>(in * kernel * kernel));
  std::normal_distribution<double> dist(0.0, std_dev);
  for (auto& v : w.value.values()) v = static_cast<T>(dist(rng));
  store.add(prefix + ".bias", {out});
  auto& scale = store.add(prefix + ".affine.scale", {out}, /*frozen=*/true);
  scale.value.fill(T{1});
  store.add(prefix + ".affine.shift", {out}, /*frozen=*/true);
}

// conv followed by the frozen affine.
template <typename T>
Tensor<T> conv_unit(const BasicParamStore<T>& store, const std::string& prefix, const Tensor<T>& x, int stride,
                    int padding) {
  auto y = conv2d(x, store.value(prefix + ".weight"), store.value(prefix + ".bias"), Conv2dArgs{stride, padding});
  return frozen_affine(y, store.value(prefix + ".affine.scale"), store.value(prefix + ".affine.shift"));
}

template <typename T>
Tensor<T> conv_unit_backward(BasicParamStore<T>& store, const std::string& prefix, const Tensor<T>& input,
                             const Tensor<T>& grad_out, int stride, int padding, bool need_input_grad) {
  auto dy = frozen_affine_backward(store.value(prefix + ".affine.scale"), grad_out);
  auto g = conv2d_backward(input, store.value(prefix + ".weight"), dy, Conv2dArgs{stride, padding}, need_input_grad);
  store.accumulate_grad(prefix + ".weight", g.weight);
  store.accumulate_grad(prefix + ".bias", g.bias);
  return std::move(g.input);
}

}  // namespace

template <typename T>
Backbone<T>::Backbone(BackboneConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  int in = cfg_.stage_channels.front();
  for (std::size_t s = 0; s < cfg_.stage_channels.size(); ++s) {
    const int out = cfg_.stage_channels[s];
    for (int b = 0; b < cfg_.blocks_per_stage[s]; ++b) {
      const int stride = b == 0 ? cfg_.stage_strides[s] : 1;
      blocks_.push_back({"backbone.s" + std::to_string(s) + ".b" + std::to_string(b), in, out, stride,
                         stride != 1 || in != out});
      in = out;
    }
  }
}

template <typename T>
void Backbone<T>::register_params(BasicParamStore<T>& store, std::mt19937_64& rng) const {
  add_conv_unit(store, "backbone.stem", 3, cfg_.stage_channels.front(), 3, rng);
  for (const auto& b : blocks_) {
    add_conv_unit(store, b.prefix + ".conv1", b.in_channels, b.out_channels, 3, rng);
    add_conv_unit(store, b.prefix + ".conv2", b.out_channels, b.out_channels, 3, rng);
    if (b.projection) add_conv_unit(store, b.prefix + ".proj", b.in_channels, b.out_channels, 1, rng);
  }
}

template <typename T>
Tensor<T> Backbone<T>::forward(const BasicParamStore<T>& store, const Tensor<T>& frames,
                               BackboneTape<T>* tape) const {
  if (frames.rank() != 4 || frames.dim(1) != 3) {
    throw ContractError("backbone: expected frames [K,3,H,W], got " + to_string(frames.shape()));
  }
  if (frames.dim(0) != cfg_.shift.num_frames) {
    throw ContractError("backbone: " + std::to_string(frames.dim(0)) + " frames, configured for " +
                        std::to_string(cfg_.shift.num_frames));
  }
  const int stride = cfg_.total_stride();
  if (frames.dim(2) % stride != 0 || frames.dim(3) % stride != 0) {
    throw ContractError("backbone: spatial size " + to_string(frames.shape()) + " not divisible by stride " +
                        std::to_string(stride));
  }
  auto stem_pre = conv_unit(store, "backbone.stem", frames, cfg_.stem_stride, 1);
  auto x = relu(stem_pre);
  if (tape) {
    tape->frames = frames;
    tape->stem_pre = std::move(stem_pre);
    tape->blocks.clear();
  }
  for (const auto& b : blocks_) {
    auto shifted = cfg_.shift.shift_fraction.is_zero() ? x : temporal_shift(x, cfg_.shift);
    auto branch_pre = conv_unit(store, b.prefix + ".conv1", shifted, b.stride, 1);
    auto branch = relu(branch_pre);
    auto sum = conv_unit(store, b.prefix + ".conv2", branch, 1, 1);
    if (b.projection) {
      sum.add_(conv_unit(store, b.prefix + ".proj", x, b.stride, 0));
    } else {
      sum.add_(x);
    }
    auto out = relu(sum);
    if (tape) {
      tape->blocks.push_back({std::move(x), std::move(shifted), std::move(branch_pre), std::move(branch),
                              std::move(sum)});
    }
    x = std::move(out);
  }
  return x;
}

template <typename T>
Tensor<T> Backbone<T>::backward(BasicParamStore<T>& store, const BackboneTape<T>& tape,
                                const Tensor<T>& grad_features, bool need_input_grad) const {
  if (tape.blocks.size() != blocks_.size()) throw ContractError("backbone backward: tape does not match model");
  Tensor<T> grad = grad_features;
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    const auto& b = blocks_[i];
    const auto& t = tape.blocks[i];
    auto dsum = relu_backward(t.sum, grad);
    auto dbranch = conv_unit_backward(store, b.prefix + ".conv2", t.branch, dsum, 1, 1, true);
    auto dbranch_pre = relu_backward(t.branch_pre, dbranch);
    auto dshifted = conv_unit_backward(store, b.prefix + ".conv1", t.shifted, dbranch_pre, b.stride, 1, true);
    Tensor<T> dx = cfg_.shift.shift_fraction.is_zero() ? std::move(dshifted)
                                                       : temporal_shift_backward(dshifted, cfg_.shift);
    if (b.projection) {
      dx.add_(conv_unit_backward(store, b.prefix + ".proj", t.input, dsum, b.stride, 0, true));
    } else {
      dx.add_(dsum);
    }
    grad = std::move(dx);
  }
  auto dstem = relu_backward(tape.stem_pre, grad);
  return conv_unit_backward(store, "backbone.stem", tape.frames, dstem, cfg_.stem_stride, 1, need_input_grad);
}

template <typename T>
std::int64_t Backbone<T>::output_extent(std::int64_t input_extent) const {
  std::int64_t e = conv_output_extent(input_extent, 3, cfg_.stem_stride, 1);
  for (const auto& b : blocks_) e = conv_output_extent(e, 3, b.stride, 1);
  return e;
}

std::int64_t conv_param_count(std::int64_t in_channels, std::int64_t out_channels, std::int64_t kernel) {
  return out_channels * in_channels * kernel * kernel + out_channels;
}

std::int64_t count_params(const ModelConfig& cfg) {
  const auto& bb = cfg.backbone;
  // Each conv unit carries weight + bias and a frozen per-channel scale/shift.
  auto unit = [](std::int64_t in, std::int64_t out, std::int64_t k) { return conv_param_count(in, out, k) + 2 * out; };
  std::int64_t total = unit(3, bb.stage_channels.front(), 3);
  std::int64_t in = bb.stage_channels.front();
  for (std::size_t s = 0; s < bb.stage_channels.size(); ++s) {
    const std::int64_t out = bb.stage_channels[s];
    for (int b = 0; b < bb.blocks_per_stage[s]; ++b) {
      const int stride = b == 0 ? bb.stage_strides[s] : 1;
      total += unit(in, out, 3) + unit(out, out, 3);
      if (stride != 1 || in != out) total += unit(in, out, 1);
      in = out;
    }
  }
  const std::int64_t c = bb.out_channels();
  const std::int64_t a = cfg.rpn.anchors_per_location();
  total += conv_param_count(c, c, 3) + conv_param_count(c, 2 * a, 1) + conv_param_count(c, 4 * a, 1);
  const std::int64_t pooled = static_cast<std::int64_t>(cfg.roi.pooled_size) * cfg.roi.pooled_size;
  const std::int64_t h = cfg.roi.hidden;
  total += (c * pooled * h + h) + (h * h + h) + (h * (cfg.num_classes() + 1) + cfg.num_classes() + 1) + (h * 4 + 4);
  return total;
}

template class Backbone<float>;
template class Backbone<double>;

}  // namespace shiftdet
