#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "shiftdet/tensor.hpp"

namespace shiftdet {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;      // same shape as value; left empty for frozen parameters
  Tensor<T> velocity;  // momentum buffer, allocated lazily by sgd_step
  bool frozen = false;
};

/// Ordered table of named parameters. Insertion order is the serialization
/// order of a checkpoint.
template <typename T>
class BasicParamStore {
 public:
  Parameter<T>& add(std::string name, Shape shape, bool frozen = false);

  bool contains(std::string_view name) const;
  Parameter<T>& get(std::string_view name);
  const Parameter<T>& get(std::string_view name) const;
  const Tensor<T>& value(std::string_view name) const { return get(name).value; }

  /// Adds `g` into the named parameter's gradient buffer.
  void accumulate_grad(std::string_view name, const Tensor<T>& g);

  std::vector<Parameter<T>>& params() noexcept { return params_; }
  const std::vector<Parameter<T>>& params() const noexcept { return params_; }

  void zero_grad();
  /// Adds every gradient of `other` (same layout) into this store.
  void add_grads_from(const BasicParamStore& other);
  void scale_grads(T factor);

  std::int64_t element_count() const;
  std::int64_t step_count() const noexcept { return step_count_; }
  void set_step_count(std::int64_t steps) { step_count_ = steps; }

  template <typename U>
  BasicParamStore<U> cast() const {
    BasicParamStore<U> out;
    for (const auto& p : params_) {
      auto& q = out.add(p.name, p.value.shape(), p.frozen);
      q.value = p.value.template cast<U>();
    }
    out.set_step_count(step_count_);
    return out;
  }

 private:
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::int64_t step_count_ = 0;
};

using ParamStore = BasicParamStore<float>;

/// velocity = momentum * velocity + grad; value -= lr * velocity; grads zeroed.
/// Frozen parameters are skipped. Throws ContractError if a trainable
/// parameter lacks a gradient buffer.
template <typename T>
void sgd_step(BasicParamStore<T>& store, double lr, double momentum);

}  // namespace shiftdet
