#include "shiftdet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace shiftdet {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d <= 0) throw ContractError("non-positive extent in shape " + to_string(shape));
    n *= d;
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(numel(shape_)), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  if (numel(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw ContractError("tensor shape " + to_string(shape_) + " does not match " +
                        std::to_string(data_.size()) + " values");
  }
}

template <typename T>
void Tensor<T>::reshape(Shape shape) {
  if (numel(shape) != size()) {
    throw ContractError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  shape_ = std::move(shape);
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void Tensor<T>::add_(const Tensor& other) {
  require_same_shape(shape_, other.shape_, "add_");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

template <typename T>
void Tensor<T>::scale_(T factor) {
  for (auto& v : data_) v *= factor;
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw ContractError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
  }
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite value");
}

template class Tensor<float>;
template class Tensor<double>;
template void require_finite(const Tensor<float>&, const char*);
template void require_finite(const Tensor<double>&, const char*);

}  // namespace shiftdet
