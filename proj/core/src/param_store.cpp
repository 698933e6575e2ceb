#include "shiftdet/param_store.hpp"

namespace shiftdet {

template <typename T>
Parameter<T>& BasicParamStore<T>::add(std::string name, Shape shape, bool frozen) {
  if (index_.contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
  Parameter<T> p;
  p.name = name;
  p.value = Tensor<T>(shape);
  if (!frozen) p.grad = Tensor<T>(shape);
  p.frozen = frozen;
  index_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return params_.back();
}

template <typename T>
bool BasicParamStore<T>::contains(std::string_view name) const {
  return index_.find(name) != index_.end();
}

template <typename T>
Parameter<T>& BasicParamStore<T>::get(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return params_[it->second];
}

template <typename T>
const Parameter<T>& BasicParamStore<T>::get(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return params_[it->second];
}

template <typename T>
void BasicParamStore<T>::accumulate_grad(std::string_view name, const Tensor<T>& g) {
  auto& p = get(name);
  if (p.frozen) throw ContractError("gradient supplied for frozen parameter '" + p.name + "'");
  p.grad.add_(g);
}

template <typename T>
void BasicParamStore<T>::zero_grad() {
  for (auto& p : params_) {
    if (!p.frozen) p.grad.fill(T{0});
  }
}

template <typename T>
void BasicParamStore<T>::add_grads_from(const BasicParamStore& other) {
  if (other.params_.size() != params_.size()) throw ContractError("add_grads_from: store layouts differ");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].frozen) continue;
    params_[i].grad.add_(other.params_[i].grad);
  }
}

template <typename T>
void BasicParamStore<T>::scale_grads(T factor) {
  for (auto& p : params_) {
    if (!p.frozen) p.grad.scale_(factor);
  }
}

template <typename T>
std::int64_t BasicParamStore<T>::element_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
void sgd_step(BasicParamStore<T>& store, double lr, double momentum) {
  if (!(lr > 0.0)) throw ContractError("sgd_step: learning rate must be positive");
  for (auto& p : store.params()) {
    if (p.frozen) continue;
    if (p.grad.shape() != p.value.shape()) throw ContractError("sgd_step: missing gradient for '" + p.name + "'");
    if (p.velocity.shape() != p.value.shape()) p.velocity = Tensor<T>(p.value.shape());
    const T mu = static_cast<T>(momentum);
    const T rate = static_cast<T>(lr);
    for (std::int64_t i = 0; i < p.value.size(); ++i) {
      p.velocity[i] = mu * p.velocity[i] + p.grad[i];
      p.value[i] -= rate * p.velocity[i];
    }
    p.grad.fill(T{0});
  }
  store.set_step_count(store.step_count() + 1);
}

template class BasicParamStore<float>;
template class BasicParamStore<double>;
template void sgd_step(BasicParamStore<float>&, double, double);
template void sgd_step(BasicParamStore<double>&, double, double);

}  // namespace shiftdet
