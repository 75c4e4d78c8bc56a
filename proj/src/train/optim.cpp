#include "clef/train/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "clef/error.hpp"

namespace clef::train {

void validate(const Schedule& s) {
  if (s.total_steps == 0) fail(ErrorKind::ConfigError, "schedule needs at least one step");
  if (s.warmup_steps > s.total_steps) fail(ErrorKind::ConfigError, "warmup_steps exceeds total_steps");
  if (!(s.min_lr >= 0.0f && s.min_lr <= s.base_lr)) fail(ErrorKind::ConfigError, "need 0 <= min_lr <= base_lr");
}

float lr_at(std::size_t step, const Schedule& s) {
  validate(s);
  if (step > s.total_steps) {
    fail(ErrorKind::StepOutOfRange, "step " + std::to_string(step) + " beyond " + std::to_string(s.total_steps));
  }
  if (step < s.warmup_steps) return static_cast<float>(double(s.base_lr) * double(step) / double(s.warmup_steps));
  const std::size_t decay = s.total_steps - s.warmup_steps;
  if (decay == 0) return s.min_lr;
  const double progress = double(step - s.warmup_steps) / double(decay);
  if (progress >= 1.0) return s.min_lr;
  return static_cast<float>(double(s.min_lr) +
                            0.5 * (double(s.base_lr) - s.min_lr) * (1.0 + std::cos(std::numbers::pi * progress)));
}

void adamw_step(std::span<num::Tensor* const> params, OptimState& state, float lr, const AdamWConfig& cfg) {
  if (!(lr >= 0.0f)) fail(ErrorKind::ConfigError, "learning rate must be >= 0");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
  }
  if (state.m.size() != params.size()) fail(ErrorKind::ShapeMismatch, "optimizer state tracks a different parameter list");
  ++state.step;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, double(state.step));
  const double c2 = 1.0 - std::pow(b2, double(state.step));
  const double decay = 1.0 - double(lr) * double(cfg.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    num::Tensor& p = *params[i];
    if (!p.has_grad()) continue;
    if (p.grad.size() != p.values.size()) fail(ErrorKind::ShapeMismatch, "gradient size differs from parameter");
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.empty()) {
      m.assign(p.size(), 0.0f);
      v.assign(p.size(), 0.0f);
    }
    if (m.size() != p.size()) fail(ErrorKind::ShapeMismatch, "moment size differs from parameter");
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = p.grad[k];
      m[k] = static_cast<float>(b1 * m[k] + (1.0 - b1) * g);
      v[k] = static_cast<float>(b2 * v[k] + (1.0 - b2) * g * g);
      const double mhat = m[k] / c1, vhat = v[k] / c2;
      const double decayed = double(p.values[k]) * decay;
      p.values[k] = static_cast<float>(decayed - double(lr) * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

}  // namespace clef::train
