#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "clef/numerics/tensor.hpp"

namespace clef::train {

struct Schedule {
  float base_lr = 2e-4f;
  float min_lr = 1e-6f;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;
};

void validate(const Schedule& s);

// Linear warmup from 0 to base_lr, then cosine decay to min_lr at total_steps.
float lr_at(std::size_t step, const Schedule& s);

struct AdamWConfig {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.01f;
};

// Moments are indexed like the parameter list passed to adamw_step.
struct OptimState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::size_t step = 0;
};

// One decoupled-weight-decay Adam step: theta *= (1 - lr * wd), then the
// bias-corrected adaptive update. Parameters whose gradient was never
// allocated are left untouched.
void adamw_step(std::span<num::Tensor* const> params, OptimState& state, float lr, const AdamWConfig& cfg = {});

}  // namespace clef::train
