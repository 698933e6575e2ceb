#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "shiftdet/tensor.hpp"

namespace shiftdet {

// Fixed set of differentiable kernels. Every forward has a matching explicit
// backward; there is no general graph autodiff.

struct Conv2dArgs {
  int stride = 1;
  int padding = 0;
};

/// Output spatial extent for a convolution/pooling window; throws when the
/// arithmetic does not yield a positive integer.
std::int64_t conv_output_extent(std::int64_t in, std::int64_t kernel, int stride, int padding);

/// Cross-correlation of input [N,C,H,W] with weight [F,C,kh,kw] plus bias [F].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dArgs args);

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;  // empty when not requested
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out,
                               Conv2dArgs args, bool need_input_grad = true);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

/// Gradient of relu given the forward input (masks where input <= 0).
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out);

template <typename T>
struct MaxPoolResult {
  Tensor<T> output;
  std::vector<std::int64_t> argmax;  // flat input index per output element
};

/// Windowed maximum. Ties resolve to the first element in row-major window order.
template <typename T>
MaxPoolResult<T> max_pool2d(const Tensor<T>& input, int kernel, int stride);

template <typename T>
Tensor<T> max_pool2d_backward(const Shape& input_shape, const std::vector<std::int64_t>& argmax,
                              const Tensor<T>& grad_out);

/// Per-channel y = scale * x + shift on [N,C,H,W]. Scale and shift are frozen.
template <typename T>
Tensor<T> frozen_affine(const Tensor<T>& input, const Tensor<T>& scale, const Tensor<T>& shift);

/// Input gradient only; the frozen parameters never receive one.
template <typename T>
Tensor<T> frozen_affine_backward(const Tensor<T>& scale, const Tensor<T>& grad_out);

/// input [N,D] times weight [O,D]^T plus bias [O].
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
struct LinearGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Row-wise softmax of [N,C].
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

/// A scalar loss together with its gradient w.r.t. the first argument.
template <typename T>
struct LossResult {
  T value{0};
  Tensor<T> grad;
};

/// Mean over rows of -log softmax(logits)[target].
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets);

/// Elementwise smooth-L1 summed and divided by element count.
template <typename T>
LossResult<T> smooth_l1(const Tensor<T>& pred, const Tensor<T>& target, T beta = T{1});

}  // namespace shiftdet
