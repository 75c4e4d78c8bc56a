#include "clef/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "clef/error.hpp"

namespace clef::num {
namespace {

float evaluate(const ObjectiveFn& f) {
  Graph g;
  const float v = f(g).item();
  if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "objective returned " + std::to_string(v));
  return v;
}

}  // namespace

GradCheckResult grad_check(const ObjectiveFn& f, std::span<Tensor* const> params, const GradCheckOptions& opts) {
  if (!(opts.step >= 1e-4f && opts.step <= 1e-2f)) {
    fail(ErrorKind::ConfigError, "grad_check step must lie in [1e-4, 1e-2]");
  }
  std::vector<bool> saved_flags;
  for (Tensor* p : params) {
    saved_flags.push_back(p->requires_grad);
    p->requires_grad = true;
    p->zero_grad();
  }

  std::vector<std::vector<float>> analytic;
  {
    Graph g;
    Var loss = f(g);
    if (!std::isfinite(loss.item())) fail(ErrorKind::NonFinite, "objective is not finite at the base point");
    g.backward(loss);
    for (Tensor* p : params) {
      analytic.push_back(p->has_grad() ? p->grad : std::vector<float>(p->size(), 0.0f));
      p->zero_grad();
    }
  }

  std::mt19937_64 rng(opts.seed);
  GradCheckResult result;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = *params[t];
    std::vector<std::size_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords_per_tensor > 0 && coords.size() > opts.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t idx : coords) {
      const float original = p.values[idx];
      const float up = original + opts.step;
      const float down = original - opts.step;
      p.values[idx] = up;
      const float f_up = evaluate(f);
      p.values[idx] = down;
      const float f_down = evaluate(f);
      p.values[idx] = original;
      // Use the representable step actually taken.
      const double numeric = (double(f_up) - double(f_down)) / (double(up) - double(down));
      const double a = analytic[t][idx];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++result.coords_checked;
      if (err > result.max_relative_error) {
        result.max_relative_error = static_cast<float>(err);
        result.worst_tensor = t;
        result.worst_index = idx;
      }
    }
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    params[t]->requires_grad = saved_flags[t];
    params[t]->zero_grad();
  }
  return result;
}

}  // namespace clef::num
