#pragma once

#include <cstdint>
#include <string>

#include "shiftdet/tensor.hpp"

namespace shiftdet {

/// Exact rational, used for the per-direction shift fraction so that channel
/// counts stay integral.
struct Fraction {
  int numerator = 1;
  int denominator = 8;

  bool is_zero() const noexcept { return numerator == 0; }
  std::string to_string() const;
  static Fraction parse(const std::string& text);
  bool operator==(const Fraction&) const = default;
};

struct ShiftConfig {
  int num_frames = 8;
  Fraction shift_fraction{1, 8};  // per direction
  bool residual_branch = true;    // shift the residual-branch input, not the identity path

  /// Channels moved in each direction for a layer of `channels` channels.
  /// Throws ContractError when the fraction does not divide `channels`.
  int fold(std::int64_t channels) const;
  void validate() const;
};

/// Frames are folded into the leading dimension: features are [K,C,H,W] with
/// K == cfg.num_frames. For output frame t, channels [0,fold) come from frame
/// t-1, channels [fold,2*fold) from frame t+1, the rest from frame t. Frames
/// that would come from outside the clip are zero.
template <typename T>
Tensor<T> temporal_shift(const Tensor<T>& features, const ShiftConfig& cfg);

/// Transpose of temporal_shift: the same move with directions swapped.
template <typename T>
Tensor<T> temporal_shift_backward(const Tensor<T>& grad_out, const ShiftConfig& cfg);

/// Temporal receptive field after `depth` stacked shift blocks, capped at the
/// clip length.
int receptive_field(int depth, int num_frames);

}  // namespace shiftdet
