#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <vector>

#include "clef/numerics/tensor.hpp"

namespace clef::testing {

inline num::Tensor random_tensor(std::mt19937_64& rng, num::Shape shape, float lo = -1.0f, float hi = 1.0f) {
  num::Tensor t(std::move(shape));
  std::uniform_real_distribution<float> dist(lo, hi);
  for (auto& v : t.values) v = dist(rng);
  return t;
}

// Random rows scaled to unit norm with a plain scalar loop.
inline num::Tensor random_unit_rows(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  num::Tensor t = random_tensor(rng, {rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += double(t.at(r, c)) * t.at(r, c);
    const double n = std::sqrt(s);
    for (std::size_t c = 0; c < cols; ++c) t.at(r, c) = static_cast<float>(t.at(r, c) / n);
  }
  return t;
}

}  // namespace clef::testing
