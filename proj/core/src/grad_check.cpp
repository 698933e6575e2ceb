#include "shiftdet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace shiftdet {

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

const GradCheckEntry& GradCheckReport::entry(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  throw ContractError("grad_check: no entry named '" + name + "'");
}

GradCheckReport grad_check(const ScalarFn& fn, const AnalyticGradFn& analytic, std::vector<TensorD> point,
                           const std::vector<std::string>& names, const GradCheckOptions& options) {
  if (names.size() != point.size()) throw ContractError("grad_check: one name per input required");
  const auto grads = analytic(point);
  if (grads.size() != point.size()) throw ContractError("grad_check: analytic gradient count mismatch");

  GradCheckReport report;
  for (std::size_t k = 0; k < point.size(); ++k) {
    GradCheckEntry entry;
    entry.name = names[k];
    entry.present = grads[k].has_value();
    if (entry.present) {
      const TensorD& g = *grads[k];
      require_same_shape(g.shape(), point[k].shape(), "grad_check");
      for (std::int64_t i = 0; i < point[k].size(); ++i) {
        if (options.near_kink && options.near_kink(k, i, point)) {
          ++entry.skipped;
          continue;
        }
        const double saved = point[k][i];
        point[k][i] = saved + options.epsilon;
        const double up = fn(point);
        point[k][i] = saved - options.epsilon;
        const double down = fn(point);
        point[k][i] = saved;
        const double numeric = (up - down) / (2.0 * options.epsilon);
        const double denom = std::max({std::abs(numeric), std::abs(g[i]), options.magnitude_floor});
        entry.max_rel_error = std::max(entry.max_rel_error, std::abs(numeric - g[i]) / denom);
        ++entry.checked;
      }
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

TensorD projection_weights(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  TensorD w(shape);
  for (auto& v : w.values()) v = dist(rng);
  return w;
}

double project(const TensorD& y, const TensorD& weights) {
  require_same_shape(y.shape(), weights.shape(), "project");
  double s = 0.0;
  for (std::int64_t i = 0; i < y.size(); ++i) s += y[i] * weights[i];
  return s;
}

}  // namespace shiftdet
