#include "shiftdet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace shiftdet {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

struct ConvGeometry {
  std::int64_t n, c, h, w;
  std::int64_t f, kh, kw;
  std::int64_t ho, wo;
  int stride, padding;

  std::int64_t patch() const { return c * kh * kw; }
  std::int64_t positions() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && padding == 0; }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& weight, Conv2dArgs args) {
  if (input.rank() != 4 || weight.rank() != 4) {
    throw ContractError("conv2d: expected 4-D input and weight, got " + to_string(input.shape()) + " and " +
                        to_string(weight.shape()));
  }
  if (input.dim(1) != weight.dim(1)) {
    throw ContractError("conv2d: channel mismatch between input " + to_string(input.shape()) + " and weight " +
                        to_string(weight.shape()));
  }
  if (args.stride <= 0 || args.padding < 0) throw ContractError("conv2d: invalid stride/padding");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0), weight.dim(2),
                 weight.dim(3), 0, 0, args.stride, args.padding};
  g.ho = conv_output_extent(g.h, g.kh, args.stride, args.padding);
  g.wo = conv_output_extent(g.w, g.kw, args.stride, args.padding);
  return g;
}

// Unfolds one image [C,H,W] into columns [C*kh*kw, Ho*Wo].
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col) {
  const std::int64_t positions = g.positions();
  for (std::int64_t c = 0; c < g.c; ++c) {
    const T* plane = image + c * g.h * g.w;
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        T* row = col + ((c * g.kh + ki) * g.kw + kj) * positions;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + ki;
          T* out = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(out, out + g.wo, T{0});
            continue;
          }
          const T* src = plane + iy * g.w;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.padding + kj;
            out[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* image) {
  const std::int64_t positions = g.positions();
  for (std::int64_t c = 0; c < g.c; ++c) {
    T* plane = image + c * g.h * g.w;
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        const T* row = col + ((c * g.kh + ki) * g.kw + kj) * positions;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + ki;
          if (iy < 0 || iy >= g.h) continue;
          T* dst = plane + iy * g.w;
          const T* in = row + oy * g.wo;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.padding + kj;
            if (ix >= 0 && ix < g.w) dst[ix] += in[ox];
          }
        }
      }
    }
  }
}

}  // namespace

std::int64_t conv_output_extent(std::int64_t in, std::int64_t kernel, int stride, int padding) {
  const std::int64_t span = in + 2 * padding - kernel;
  if (span < 0) {
    throw ContractError("window of size " + std::to_string(kernel) + " does not fit extent " + std::to_string(in) +
                        " with padding " + std::to_string(padding));
  }
  return span / stride + 1;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dArgs args) {
  const ConvGeometry g = conv_geometry(input, weight, args);
  if (bias.size() != g.f) {
    throw ContractError("conv2d: bias " + to_string(bias.shape()) + " does not match weight " +
                        to_string(weight.shape()));
  }
  Tensor<T> out({g.n, g.f, g.ho, g.wo});
  const std::int64_t positions = g.positions();
  AlignedVector<T> col(g.pointwise() ? 0 : static_cast<std::size_t>(g.patch() * positions));
  ConstMatMap<T> w(weight.ptr(), g.f, g.patch());
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.ptr(), g.f);
  for (std::int64_t n = 0; n < g.n; ++n) {
    const T* image = input.ptr() + n * g.c * g.h * g.w;
    const T* cols = image;
    if (!g.pointwise()) {
      im2col(image, g, col.data());
      cols = col.data();
    }
    MatMap<T> y(out.ptr() + n * g.f * positions, g.f, positions);
    y.noalias() = w * ConstMatMap<T>(cols, g.patch(), positions);
    y.colwise() += b;
  }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out,
                               Conv2dArgs args, bool need_input_grad) {
  const ConvGeometry g = conv_geometry(input, weight, args);
  require_same_shape(grad_out.shape(), Shape{g.n, g.f, g.ho, g.wo}, "conv2d_backward");
  Conv2dGrads<T> grads;
  grads.weight = Tensor<T>(weight.shape());
  grads.bias = Tensor<T>({g.f});
  if (need_input_grad) grads.input = Tensor<T>(input.shape());

  const std::int64_t positions = g.positions();
  AlignedVector<T> col(g.pointwise() ? 0 : static_cast<std::size_t>(g.patch() * positions));
  AlignedVector<T> dcol(need_input_grad && !g.pointwise() ? col.size() : 0);
  ConstMatMap<T> w(weight.ptr(), g.f, g.patch());
  MatMap<T> dw(grads.weight.ptr(), g.f, g.patch());
  for (std::int64_t n = 0; n < g.n; ++n) {
    const T* image = input.ptr() + n * g.c * g.h * g.w;
    const T* cols = image;
    if (!g.pointwise()) {
      im2col(image, g, col.data());
      cols = col.data();
    }
    ConstMatMap<T> dy(grad_out.ptr() + n * g.f * positions, g.f, positions);
    dw.noalias() += dy * ConstMatMap<T>(cols, g.patch(), positions).transpose();
    for (std::int64_t f = 0; f < g.f; ++f) grads.bias[f] += dy.row(f).sum();
    if (!need_input_grad) continue;
    T* dimage = grads.input.ptr() + n * g.c * g.h * g.w;
    if (g.pointwise()) {
      MatMap<T>(dimage, g.patch(), positions).noalias() = w.transpose() * dy;
    } else {
      MatMap<T>(dcol.data(), g.patch(), positions).noalias() = w.transpose() * dy;
      col2im_add(dcol.data(), g, dimage);
    }
  }
  return grads;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out = input;
  for (auto& v : out.values()) v = v > T{0} ? v : T{0};
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
  require_same_shape(input.shape(), grad_out.shape(), "relu_backward");
  Tensor<T> grad = grad_out;
  for (std::int64_t i = 0; i < grad.size(); ++i) {
    if (!(input[i] > T{0})) grad[i] = T{0};
  }
  return grad;
}

template <typename T>
MaxPoolResult<T> max_pool2d(const Tensor<T>& input, int kernel, int stride) {
  if (input.rank() != 4) throw ContractError("max_pool2d: expected 4-D input " + to_string(input.shape()));
  if (kernel <= 0 || stride <= 0) throw ContractError("max_pool2d: invalid window");
  const auto n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const auto ho = conv_output_extent(h, kernel, stride, 0);
  const auto wo = conv_output_extent(w, kernel, stride, 0);
  MaxPoolResult<T> r{Tensor<T>({n, c, ho, wo}), {}};
  r.argmax.resize(static_cast<std::size_t>(r.output.size()));
  std::int64_t o = 0;
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    const std::int64_t base = plane * h * w;
    for (std::int64_t oy = 0; oy < ho; ++oy) {
      for (std::int64_t ox = 0; ox < wo; ++ox, ++o) {
        std::int64_t best = base + (oy * stride) * w + ox * stride;
        for (int ky = 0; ky < kernel; ++ky) {
          for (int kx = 0; kx < kernel; ++kx) {
            const std::int64_t idx = base + (oy * stride + ky) * w + ox * stride + kx;
            if (input[idx] > input[best]) best = idx;
          }
        }
        r.output[o] = input[best];
        r.argmax[static_cast<std::size_t>(o)] = best;
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> max_pool2d_backward(const Shape& input_shape, const std::vector<std::int64_t>& argmax,
                              const Tensor<T>& grad_out) {
  if (static_cast<std::int64_t>(argmax.size()) != grad_out.size()) {
    throw ContractError("max_pool2d_backward: argmax/grad size mismatch");
  }
  Tensor<T> grad(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad[argmax[i]] += grad_out[static_cast<std::int64_t>(i)];
  return grad;
}

template <typename T>
Tensor<T> frozen_affine(const Tensor<T>& input, const Tensor<T>& scale, const Tensor<T>& shift) {
  if (input.rank() != 4 || scale.size() != input.dim(1) || shift.size() != input.dim(1)) {
    throw ContractError("frozen_affine: scale/shift " + to_string(scale.shape()) + " do not match input " +
                        to_string(input.shape()));
  }
  Tensor<T> out(input.shape());
  const auto n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const std::int64_t base = (i * c + ch) * plane;
      const T s = scale[ch], b = shift[ch];
      for (std::int64_t p = 0; p < plane; ++p) out[base + p] = s * input[base + p] + b;
    }
  }
  return out;
}

template <typename T>
Tensor<T> frozen_affine_backward(const Tensor<T>& scale, const Tensor<T>& grad_out) {
  if (grad_out.rank() != 4 || scale.size() != grad_out.dim(1)) {
    throw ContractError("frozen_affine_backward: scale does not match gradient " + to_string(grad_out.shape()));
  }
  Tensor<T> grad = grad_out;
  const auto n = grad.dim(0), c = grad.dim(1), plane = grad.dim(2) * grad.dim(3);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      T* p = grad.ptr() + (i * c + ch) * plane;
      for (std::int64_t k = 0; k < plane; ++k) p[k] *= scale[ch];
    }
  }
  return grad;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (input.rank() != 2 || weight.rank() != 2 || input.dim(1) != weight.dim(1) || bias.size() != weight.dim(0)) {
    throw ContractError("linear: shape mismatch between input " + to_string(input.shape()) + " and weight " +
                        to_string(weight.shape()));
  }
  const auto n = input.dim(0), d = input.dim(1), o = weight.dim(0);
  Tensor<T> out({n, o});
  MatMap<T> y(out.ptr(), n, o);
  y.noalias() = ConstMatMap<T>(input.ptr(), n, d) * ConstMatMap<T>(weight.ptr(), o, d).transpose();
  y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.ptr(), o);
  return out;
}

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out) {
  const auto n = input.dim(0), d = input.dim(1), o = weight.dim(0);
  require_same_shape(grad_out.shape(), Shape{n, o}, "linear_backward");
  LinearGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weight.shape()), Tensor<T>({o})};
  ConstMatMap<T> dy(grad_out.ptr(), n, o);
  MatMap<T>(g.input.ptr(), n, d).noalias() = dy * ConstMatMap<T>(weight.ptr(), o, d);
  MatMap<T>(g.weight.ptr(), o, d).noalias() = dy.transpose() * ConstMatMap<T>(input.ptr(), n, d);
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(g.bias.ptr(), o) = dy.colwise().sum();
  return g;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out = a;
  out.add_(b);
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ContractError("softmax: expected [N,C], got " + to_string(logits.shape()));
  Tensor<T> out(logits.shape());
  const auto n = logits.dim(0), c = logits.dim(1);
  for (std::int64_t i = 0; i < n; ++i) {
    const T* row = logits.ptr() + i * c;
    T* dst = out.ptr() + i * c;
    const T peak = *std::max_element(row, row + c);
    T total{0};
    for (std::int64_t j = 0; j < c; ++j) {
      dst[j] = std::exp(row[j] - peak);
      total += dst[j];
    }
    for (std::int64_t j = 0; j < c; ++j) dst[j] /= total;
  }
  return out;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
  if (logits.rank() != 2 || static_cast<std::int64_t>(targets.size()) != logits.dim(0)) {
    throw ContractError("softmax_cross_entropy: logits " + to_string(logits.shape()) + " vs " +
                        std::to_string(targets.size()) + " targets");
  }
  const auto n = logits.dim(0), c = logits.dim(1);
  LossResult<T> r{T{0}, Tensor<T>(logits.shape())};
  for (std::int64_t i = 0; i < n; ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= c) {
      throw ContractError("softmax_cross_entropy: target " + std::to_string(t) + " outside [0," +
                          std::to_string(c) + ")");
    }
    const T* row = logits.ptr() + i * c;
    T* g = r.grad.ptr() + i * c;
    const T peak = *std::max_element(row, row + c);
    T total{0};
    for (std::int64_t j = 0; j < c; ++j) {
      g[j] = std::exp(row[j] - peak);
      total += g[j];
    }
    r.value += std::log(total) - (row[t] - peak);
    for (std::int64_t j = 0; j < c; ++j) g[j] /= total;
    g[t] -= T{1};
  }
  const T inv = T{1} / static_cast<T>(n);
  r.value *= inv;
  r.grad.scale_(inv);
  return r;
}

template <typename T>
LossResult<T> smooth_l1(const Tensor<T>& pred, const Tensor<T>& target, T beta) {
  require_same_shape(pred.shape(), target.shape(), "smooth_l1");
  if (!(beta > T{0})) throw ContractError("smooth_l1: beta must be positive");
  LossResult<T> r{T{0}, Tensor<T>(pred.shape())};
  const T inv = T{1} / static_cast<T>(pred.size());
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const T d = pred[i] - target[i];
    const T ad = std::abs(d);
    if (ad < beta) {
      r.value += T{0.5} * d * d / beta;
      r.grad[i] = d / beta * inv;
    } else {
      r.value += ad - T{0.5} * beta;
      r.grad[i] = (d > T{0} ? T{1} : T{-1}) * inv;
    }
  }
  r.value *= inv;
  return r;
}

#define SHIFTDET_INSTANTIATE_OPS(T)                                                                             \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dArgs);                 \
  template Conv2dGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dArgs,    \
                                          bool);                                                               \
  template Tensor<T> relu(const Tensor<T>&);                                                                   \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                        \
  template MaxPoolResult<T> max_pool2d(const Tensor<T>&, int, int);                                            \
  template Tensor<T> max_pool2d_backward(const Shape&, const std::vector<std::int64_t>&, const Tensor<T>&);     \
  template Tensor<T> frozen_affine(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> frozen_affine_backward(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                             \
  template LinearGrads<T> linear_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                  \
  template Tensor<T> softmax(const Tensor<T>&);                                                                \
  template LossResult<T> softmax_cross_entropy(const Tensor<T>&, std::span<const int>);                        \
  template LossResult<T> smooth_l1(const Tensor<T>&, const Tensor<T>&, T);

SHIFTDET_INSTANTIATE_OPS(float)
SHIFTDET_INSTANTIATE_OPS(double)

}  // namespace shiftdet
