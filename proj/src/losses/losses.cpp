#include "clef/losses/losses.hpp"

#include <algorithm>
#include <numeric>

#include "clef/error.hpp"
#include "clef/numerics/ops.hpp"

namespace clef::losses {

using num::Tensor;
using num::Var;

PairMasks build_pair_masks(std::span<const int> anchor_labels, std::span<const int> candidate_labels,
                           std::span<const std::ptrdiff_t> self_map) {
  const std::size_t n = anchor_labels.size(), m = candidate_labels.size();
  if (!self_map.empty() && self_map.size() != n) {
    fail(ErrorKind::LengthMismatch, "self_map has " + std::to_string(self_map.size()) + " entries for " +
                                        std::to_string(n) + " anchors");
  }
  PairMasks pm;
  pm.n_anchors = n;
  pm.n_candidates = m;
  pm.positive.assign(n * m, 0);
  pm.valid.assign(n * m, 1);
  pm.positive_count.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!self_map.empty() && self_map[i] != kNoSelf) {
      if (self_map[i] < 0 || static_cast<std::size_t>(self_map[i]) >= m) {
        fail(ErrorKind::IndexOutOfRange, "self_map entry " + std::to_string(self_map[i]));
      }
      pm.valid[i * m + static_cast<std::size_t>(self_map[i])] = 0;
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (pm.valid[i * m + j] && anchor_labels[i] == candidate_labels[j]) {
        pm.positive[i * m + j] = 1;
        ++pm.positive_count[i];
      }
    }
  }
  return pm;
}

namespace {

std::vector<int> doubled(std::span<const int> labels) {
  std::vector<int> out(labels.begin(), labels.end());
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

std::vector<std::ptrdiff_t> identity_map(std::size_t n) {
  std::vector<std::ptrdiff_t> m(n);
  std::iota(m.begin(), m.end(), std::ptrdiff_t{0});
  return m;
}

Var constant(Var like, Tensor t) { return like.graph->constant(std::move(t)); }

}  // namespace

PairMasks paired_layout(std::span<const int> labels) {
  const auto cand = doubled(labels);
  const auto self = identity_map(labels.size());
  return build_pair_masks(labels, cand, self);
}

PairMasks symmetric_layout(std::span<const int> labels) {
  const auto both = doubled(labels);
  const auto self = identity_map(both.size());
  return build_pair_masks(both, both, self);
}

Var supcon_loss(Var anchors, Var candidates, const PairMasks& masks, Var logit_scale) {
  if (anchors.rows() != masks.n_anchors || candidates.rows() != masks.n_candidates) {
    fail(ErrorKind::LengthMismatch, "masks are " + std::to_string(masks.n_anchors) + "x" +
                                        std::to_string(masks.n_candidates) + " for " + std::to_string(anchors.rows()) +
                                        " anchors and " + std::to_string(candidates.rows()) + " candidates");
  }
  if (!(logit_scale.item() > 0.0f)) fail(ErrorKind::BadTemperature, "logit scale must be > 0");
  const std::size_t n = masks.n_anchors, m = masks.n_candidates;
  Var logits = num::matmul_nt(anchors, candidates) * logit_scale;
  std::vector<float> pos_weight(n * m, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    if (masks.positive_count[i] == 0) continue;
    const float inv = 1.0f / static_cast<float>(masks.positive_count[i]);
    for (std::size_t j = 0; j < m; ++j) {
      if (masks.is_positive(i, j)) pos_weight[i * m + j] = inv;
    }
  }
  return num::sum_all(num::soft_target_nll_rows(logits, masks.valid, pos_weight));
}

Var supcon_loss(Var anchors, Var candidates, const PairMasks& masks, float temperature) {
  if (!(temperature > 0.0f)) fail(ErrorKind::BadTemperature, "temperature must be > 0");
  return supcon_loss(anchors, candidates, masks, anchors.graph->constant(Tensor::scalar(1.0f / temperature)));
}

Var image_image_loss(Var zI, Var zI2, std::span<const int> labels, Var scale, bool symmetric_anchors) {
  if (zI.rows() != labels.size() || zI2.rows() != labels.size()) {
    fail(ErrorKind::LengthMismatch, "view rows do not match the label count");
  }
  const Var views[] = {zI, zI2};
  Var cand = num::concat_rows(views);
  if (symmetric_anchors) return supcon_loss(cand, cand, symmetric_layout(labels), scale);
  return supcon_loss(zI, cand, paired_layout(labels), scale);
}

PretrainTerms pretrain_loss(Var zI, Var zI2, Var zA, std::span<const int> labels, Var scale_ii, Var scale_ia,
                            bool symmetric_anchors) {
  if (zA.rows() != labels.size()) fail(ErrorKind::LengthMismatch, "activity text rows do not match the label count");
  Var ii = image_image_loss(zI, zI2, labels, scale_ii, symmetric_anchors);
  const Var parts[] = {zI, zA};
  Var cand = num::concat_rows(parts);
  Var ia = symmetric_anchors ? supcon_loss(cand, cand, symmetric_layout(labels), scale_ia)
                             : supcon_loss(zI, cand, paired_layout(labels), scale_ia);
  return {(ii + ia) * 0.5f, ii, ia};
}

Var name_description_loss(Var zD, Var zN, Var logit_scale) {
  const std::size_t c = zD.rows();
  if (zN.rows() != c || zD.cols() != zN.cols()) {
    fail(ErrorKind::SizeMismatch, std::to_string(c) + " descriptions vs " + std::to_string(zN.rows()) + " names");
  }
  if (!(logit_scale.item() > 0.0f)) fail(ErrorKind::BadTemperature, "logit scale must be > 0");
  std::vector<int> diag(c);
  std::iota(diag.begin(), diag.end(), 0);
  const std::vector<float> ones(c, 1.0f);
  return weighted_cross_entropy(num::matmul_nt(zD, zN) * logit_scale, diag, ones);
}

Var weighted_cross_entropy(Var logits, std::span<const int> targets, std::span<const float> w) {
  const std::size_t b = logits.rows(), c = logits.cols();
  if (targets.size() != b) fail(ErrorKind::LengthMismatch, "targets do not match logits rows");
  if (w.size() != c) fail(ErrorKind::SizeMismatch, "class weights do not match the class count");
  std::vector<float> pick(b * c, 0.0f);
  for (std::size_t i = 0; i < b; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= c) {
      fail(ErrorKind::TargetOutOfRange, "target " + std::to_string(targets[i]) + " with " + std::to_string(c) +
                                            " classes");
    }
    pick[i * c + static_cast<std::size_t>(targets[i])] = w[static_cast<std::size_t>(targets[i])];
  }
  const std::vector<std::uint8_t> all(b * c, 1);
  return num::sum_all(num::soft_target_nll_rows(logits, all, pick)) * (1.0f / static_cast<float>(b));
}

Var weighted_bce(Var logits, std::span<const std::uint8_t> targets, std::span<const float> w) {
  const std::size_t b = logits.rows(), c = logits.cols();
  if (targets.size() != b * c) fail(ErrorKind::LengthMismatch, "targets do not match logits");
  if (w.size() != c) fail(ErrorKind::SizeMismatch, "class weights do not match the class count");
  Tensor pos = Tensor::matrix(b, c), neg = Tensor::matrix(b, c);
  for (std::size_t i = 0; i < b * c; ++i) {
    if (targets[i] > 1) fail(ErrorKind::TargetNotBinary, "target value " + std::to_string(int(targets[i])));
    if (targets[i]) {
      pos.values[i] = w[i % c];
    } else {
      neg.values[i] = 1.0f;
    }
  }
  Var lp = num::log_sigmoid(logits), ln = num::log_sigmoid(num::neg(logits));
  Var total = num::sum_all(lp * constant(lp, std::move(pos))) + num::sum_all(ln * constant(ln, std::move(neg)));
  return total * (-1.0f / static_cast<float>(b));
}

namespace {

Var scaled_similarity(Var zI, Var zN, Var logit_scale) {
  if (zI.cols() != zN.cols()) fail(ErrorKind::SizeMismatch, "embedding widths differ");
  if (!(logit_scale.item() > 0.0f)) fail(ErrorKind::BadTemperature, "logit scale must be > 0");
  return num::matmul_nt(zI, zN) * logit_scale;
}

}  // namespace

Var fer_image_name_loss(Var zI, Var zN, std::span<const int> targets, std::span<const float> w, Var logit_scale) {
  return weighted_cross_entropy(scaled_similarity(zI, zN, logit_scale), targets, w);
}

Var au_image_name_loss(Var zI, Var zN, std::span<const std::uint8_t> targets, std::span<const float> w,
                       Var logit_scale) {
  return weighted_bce(scaled_similarity(zI, zN, logit_scale), targets, w);
}

Var finetune_loss(Var image_name, Var name_description, float lambda) {
  if (!(lambda > 0.0f)) fail(ErrorKind::ConfigError, "lambda must be > 0");
  return (image_name * lambda + name_description) * 0.5f;
}

float finetune_loss(float image_name, float name_description, float lambda) {
  if (!(lambda > 0.0f)) fail(ErrorKind::ConfigError, "lambda must be > 0");
  return (lambda * image_name + name_description) * 0.5f;
}

std::vector<float> class_weights(const data::Dataset& ds) {
  if (ds.empty()) fail(ErrorKind::EmptyDataset, "class weights need samples");
  const std::size_t c = ds.n_classes;
  if (c == 0) fail(ErrorKind::ConfigError, "dataset has no classes");
  const double floor = 1.0 / (10.0 * double(c));
  const double n = double(ds.size());
  std::vector<double> raw(c, 0.0);
  if (ds.task == data::Task::Fer) {
    std::vector<double> count(c, 0.0);
    for (const auto& s : ds.samples) count[static_cast<std::size_t>(s.target_class)] += 1.0;
    for (std::size_t k = 0; k < c; ++k) raw[k] = 1.0 / std::max(count[k] / n, floor);
  } else {
    std::vector<double> count(c, 0.0);
    for (const auto& s : ds.samples)
      for (std::size_t k = 0; k < c; ++k) count[k] += s.target_multi[k];
    for (std::size_t k = 0; k < c; ++k) {
      const double p = count[k] / n;
      // A class positive in every sample would get weight 0; floor it too.
      raw[k] = std::max(1.0 - p, floor) / std::max(p, floor);
    }
  }
  const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / double(c);
  std::vector<float> w(c);
  for (std::size_t k = 0; k < c; ++k) w[k] = static_cast<float>(raw[k] / mean);
  return w;
}

}  // namespace clef::losses
