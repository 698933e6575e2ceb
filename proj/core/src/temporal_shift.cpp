#include "shiftdet/temporal_shift.hpp"

#include <algorithm>
#include <cstring>

namespace shiftdet {

std::string Fraction::to_string() const {
  return std::to_string(numerator) + "/" + std::to_string(denominator);
}

Fraction Fraction::parse(const std::string& text) {
  const auto slash = text.find('/');
  Fraction f;
  try {
    if (slash == std::string::npos) {
      f.numerator = std::stoi(text);
      f.denominator = 1;
    } else {
      f.numerator = std::stoi(text.substr(0, slash));
      f.denominator = std::stoi(text.substr(slash + 1));
    }
  } catch (const std::exception&) {
    throw ContractError("invalid fraction '" + text + "'");
  }
  if (f.denominator <= 0 || f.numerator < 0 || 2 * f.numerator > f.denominator) {
    throw ContractError("fraction '" + text + "' must lie in [0, 1/2]");
  }
  return f;
}

int ShiftConfig::fold(std::int64_t channels) const {
  const std::int64_t scaled = channels * shift_fraction.numerator;
  if (scaled % shift_fraction.denominator != 0) {
    throw ContractError("shift fraction " + shift_fraction.to_string() + " of " + std::to_string(channels) +
                        " channels is not an integer");
  }
  return static_cast<int>(scaled / shift_fraction.denominator);
}

void ShiftConfig::validate() const {
  if (num_frames < 2) throw ContractError("shift: num_frames must be at least 2");
  if (shift_fraction.denominator <= 0 || shift_fraction.numerator < 0 ||
      2 * shift_fraction.numerator > shift_fraction.denominator) {
    throw ContractError("shift: fraction " + shift_fraction.to_string() + " must lie in [0, 1/2]");
  }
}

namespace {

// direction +1 moves the first fold channels forward in time and the second
// fold backward; direction -1 is the transpose.
template <typename T>
Tensor<T> shift_impl(const Tensor<T>& x, const ShiftConfig& cfg, int direction) {
  if (x.rank() != 4) throw ContractError("temporal_shift: expected [K,C,H,W], got " + to_string(x.shape()));
  const std::int64_t k = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (k != cfg.num_frames) {
    throw ContractError("temporal_shift: " + std::to_string(k) + " frames, configured for " +
                        std::to_string(cfg.num_frames));
  }
  const int fold = cfg.fold(c);
  if (fold == 0) return x;

  Tensor<T> out(x.shape());
  const std::size_t block = static_cast<std::size_t>(fold * plane) * sizeof(T);
  for (std::int64_t t = 0; t < k; ++t) {
    T* dst = out.ptr() + t * c * plane;
    const T* self = x.ptr() + t * c * plane;
    // First group: forward-shifted copies from t - direction.
    const std::int64_t src_a = t - direction;
    if (src_a >= 0 && src_a < k) std::memcpy(dst, x.ptr() + src_a * c * plane, block);
    // Second group: from t + direction.
    const std::int64_t src_b = t + direction;
    if (src_b >= 0 && src_b < k) std::memcpy(dst + fold * plane, x.ptr() + src_b * c * plane + fold * plane, block);
    std::copy(self + 2 * fold * plane, self + c * plane, dst + 2 * fold * plane);
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> temporal_shift(const Tensor<T>& features, const ShiftConfig& cfg) {
  return shift_impl(features, cfg, +1);
}

template <typename T>
Tensor<T> temporal_shift_backward(const Tensor<T>& grad_out, const ShiftConfig& cfg) {
  return shift_impl(grad_out, cfg, -1);
}

int receptive_field(int depth, int num_frames) {
  if (depth < 0) throw ContractError("receptive_field: negative depth");
  return std::min(1 + 2 * depth, num_frames);
}

template Tensor<float> temporal_shift(const Tensor<float>&, const ShiftConfig&);
template Tensor<double> temporal_shift(const Tensor<double>&, const ShiftConfig&);
template Tensor<float> temporal_shift_backward(const Tensor<float>&, const ShiftConfig&);
template Tensor<double> temporal_shift_backward(const Tensor<double>&, const ShiftConfig&);

}  // namespace shiftdet
