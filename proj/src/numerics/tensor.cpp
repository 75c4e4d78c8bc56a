#include "clef/numerics/tensor.hpp"

#include <functional>
#include <numeric>

#include "clef/error.hpp"

namespace clef::num {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s, float fill) : shape(std::move(s)), values(shape_size(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<float> v) : shape(std::move(s)), values(std::move(v)) {
  if (values.size() != shape_size(shape)) {
    fail(ErrorKind::ShapeMismatch,
         "tensor " + shape_string(shape) + " given " + std::to_string(values.size()) + " values");
  }
}

std::size_t Tensor::rows() const {
  if (shape.size() <= 1) return 1;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
  return r;
}

std::size_t Tensor::cols() const {
  if (shape.empty()) return 1;
  return shape.back();
}

std::vector<float>& Tensor::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0f);
  return grad;
}

}  // namespace clef::num
