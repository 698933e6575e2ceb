#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shiftdet/tensor.hpp"

namespace shiftdet {

struct GradCheckOptions {
  double epsilon = 1e-6;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double magnitude_floor = 1e-4;
  // Returns true when element `index` of input `input` lies too close to a
  // non-differentiable point to be checked by finite differences.
  std::function<bool(std::size_t input, std::int64_t index, std::span<const TensorD> point)> near_kink;
};

struct GradCheckEntry {
  std::string name;
  bool present = false;  // false when the op reports no gradient (frozen)
  double max_rel_error = 0.0;
  std::int64_t checked = 0;
  std::int64_t skipped = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double max_rel_error() const;
  const GradCheckEntry& entry(const std::string& name) const;
};

using ScalarFn = std::function<double(std::span<const TensorD>)>;
using AnalyticGradFn = std::function<std::vector<std::optional<TensorD>>(std::span<const TensorD>)>;

/// Compares analytic gradients of a scalar function against central
/// differences at `point`, one report entry per input tensor.
GradCheckReport grad_check(const ScalarFn& fn, const AnalyticGradFn& analytic, std::vector<TensorD> point,
                           const std::vector<std::string>& names, const GradCheckOptions& options = {});

/// Fixed pseudo-random projection used to reduce a tensor-valued op to a
/// scalar: returns sum_i r_i * y_i with r drawn from `seed`.
TensorD projection_weights(const Shape& shape, std::uint64_t seed);
double project(const TensorD& y, const TensorD& weights);

}  // namespace shiftdet
