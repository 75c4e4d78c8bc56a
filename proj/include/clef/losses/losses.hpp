#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "clef/data/dataset.hpp"
#include "clef/numerics/graph.hpp"

namespace clef::losses {

// Positive and valid candidate sets per anchor.
struct PairMasks {
  std::size_t n_anchors = 0;
  std::size_t n_candidates = 0;
  std::vector<std::uint8_t> positive;  // n_anchors x n_candidates
  std::vector<std::uint8_t> valid;     // excludes each anchor's own slot
  std::vector<std::size_t> positive_count;

  bool is_positive(std::size_t i, std::size_t j) const { return positive[i * n_candidates + j] != 0; }
  bool is_valid(std::size_t i, std::size_t j) const { return valid[i * n_candidates + j] != 0; }
};

inline constexpr std::ptrdiff_t kNoSelf = -1;

// self_map[i] is the candidate slot holding anchor i itself (kNoSelf for
// none); an empty map means no anchor appears among the candidates.
PairMasks build_pair_masks(std::span<const int> anchor_labels, std::span<const int> candidate_labels,
                           std::span<const std::ptrdiff_t> self_map = {});

// n anchors against candidates `labels ++ labels`, each anchor excluding
// its own slot i. Serves both the image/second-view and the image/activity
// text layouts, whose candidate lists are view-1 followed by the partner.
PairMasks paired_layout(std::span<const int> labels);
// 2n anchors (first ++ second) against the same 2n candidates.
PairMasks symmetric_layout(std::span<const int> labels);

// Multi-positive contrastive loss summed over anchors. For each anchor with
// positives: logsumexp over valid candidates minus the mean positive logit.
// Anchors without positives contribute nothing.
num::Var supcon_loss(num::Var anchors, num::Var candidates, const PairMasks& masks, num::Var logit_scale);
num::Var supcon_loss(num::Var anchors, num::Var candidates, const PairMasks& masks, float temperature);

struct PretrainTerms {
  num::Var total;  // (ii + ia) / 2
  num::Var ii;
  num::Var ia;
};

// zI, zI2: the two image views; zA: activity text embeddings (n rows each).
// scale_ii / scale_ia are the inverse temperatures of the two terms.
PretrainTerms pretrain_loss(num::Var zI, num::Var zI2, num::Var zA, std::span<const int> activity_labels,
                            num::Var scale_ii, num::Var scale_ia, bool symmetric_anchors = false);
// Image/second-view term alone, for runs without activity text.
num::Var image_image_loss(num::Var zI, num::Var zI2, std::span<const int> activity_labels, num::Var scale,
                          bool symmetric_anchors = false);

// Cross-entropy of descriptions against names with diagonal targets.
num::Var name_description_loss(num::Var zD, num::Var zN, num::Var logit_scale);

// -(1/B) sum_i w[y_i] log softmax(logits_i)[y_i]
num::Var weighted_cross_entropy(num::Var logits, std::span<const int> targets, std::span<const float> w);
// -(1/B) sum_i sum_c w_c y log s(x) + (1 - y) log(1 - s(x)), targets B x C row-major.
num::Var weighted_bce(num::Var logits, std::span<const std::uint8_t> targets, std::span<const float> w);

num::Var fer_image_name_loss(num::Var zI, num::Var zN, std::span<const int> targets, std::span<const float> w,
                             num::Var logit_scale);
num::Var au_image_name_loss(num::Var zI, num::Var zN, std::span<const std::uint8_t> targets,
                            std::span<const float> w, num::Var logit_scale);

// (lambda * image_name + name_description) / 2
num::Var finetune_loss(num::Var image_name, num::Var name_description, float lambda);
float finetune_loss(float image_name, float name_description, float lambda);

// Inverse-frequency weights normalized to mean 1. FER uses class
// frequencies, AUR the negative/positive ratio; both floor at 1/(10C).
std::vector<float> class_weights(const data::Dataset& ds);

}  // namespace clef::losses
