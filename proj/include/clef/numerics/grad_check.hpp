#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "clef/numerics/graph.hpp"

namespace clef::num {

struct GradCheckOptions {
  float step = 1e-3f;
  // 0 checks every coordinate; otherwise a seeded sample of this many
  // coordinates per tensor.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  float max_relative_error = 0.0f;
  std::size_t coords_checked = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
};

// Builds the scalar objective into the supplied graph. It must register the
// checked tensors as leaves (Graph::leaf) on every call.
using ObjectiveFn = std::function<Var(Graph&)>;

// Compares reverse-mode gradients against central differences. The error
// per coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
// Gradients of `params` are cleared before and after the check.
GradCheckResult grad_check(const ObjectiveFn& f, std::span<Tensor* const> params, const GradCheckOptions& opts = {});

}  // namespace clef::num
