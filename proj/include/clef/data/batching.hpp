#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "clef/data/dataset.hpp"
#include "clef/numerics/tensor.hpp"

namespace clef::data {

struct AugmentPolicy {
  float flip_prob = 0.0f;
  std::size_t crop_pad = 0;    // random shift of up to this many pixels per axis
  float rotation_max = 0.0f;   // degrees, nearest-neighbour resampling
};

// Pre-training views: crop, flip and rotation.
AugmentPolicy pretrain_policy();
// Fine-tuning views: horizontal flip only.
AugmentPolicy finetune_policy();

void validate(const AugmentPolicy& policy, std::size_t height, std::size_t width);

// Output keeps height x width and is clamped to [0, 1]. A policy with all
// fields zero returns the input unchanged.
std::vector<float> augment(std::span<const float> image, std::size_t height, std::size_t width,
                           const AugmentPolicy& policy, std::mt19937_64& rng);

struct Batch {
  std::vector<std::size_t> indices;  // into the source dataset
  num::Tensor view1;                 // n x (height * width)
  num::Tensor view2;                 // n x (height * width) when two views are requested
  std::vector<int> activities;       // n
  std::vector<int> view_activities;  // 2n when two views (labels duplicated), else n

  std::size_t size() const { return indices.size(); }
};

struct BatchOptions {
  std::size_t batch_size = 64;
  std::uint64_t shuffle_seed = 0;
  bool shuffle = true;
  bool two_views = false;
  AugmentPolicy policy;
  // Contrastive batches need at least two samples; the trailing partial
  // batch is dropped when drop_last is set.
  bool contrastive = true;
  bool drop_last = true;
};

std::vector<Batch> make_batches(const Dataset& ds, const BatchOptions& opts);

}  // namespace clef::data
