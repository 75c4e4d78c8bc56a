#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace clef::num {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major f32 storage with a lazily allocated gradient buffer.
// Rank 0 and rank 1 shapes are viewed as a single row by the 2-D kernels.
struct Tensor {
  Shape shape;
  std::vector<float> values;
  std::vector<float> grad;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(Shape s, float fill = 0.0f);
  Tensor(Shape s, std::vector<float> v);

  static Tensor matrix(std::size_t rows, std::size_t cols, float fill = 0.0f) { return Tensor({rows, cols}, fill); }
  static Tensor scalar(float v) { return Tensor({1, 1}, std::vector<float>{v}); }

  std::size_t size() const { return values.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  float& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  float at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  std::span<float> row(std::size_t r) { return {values.data() + r * cols(), cols()}; }
  std::span<const float> row(std::size_t r) const { return {values.data() + r * cols(), cols()}; }

  bool has_grad() const { return !grad.empty(); }
  // Allocates a zero gradient on first use.
  std::vector<float>& ensure_grad();
  void zero_grad() { grad.clear(); }
};

}  // namespace clef::num
