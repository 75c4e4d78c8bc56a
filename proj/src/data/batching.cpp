#include "clef/data/batching.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "clef/data/synth.hpp"
#include "clef/error.hpp"

namespace clef::data {

// No crop shift: at 16x16 with 4x4 patches one pixel is a quarter patch and
// moves the thin attribute strokes off their patch.
AugmentPolicy pretrain_policy() { return {.flip_prob = 0.5f, .crop_pad = 0, .rotation_max = 5.0f}; }
AugmentPolicy finetune_policy() { return {.flip_prob = 0.5f, .crop_pad = 0, .rotation_max = 0.0f}; }

void validate(const AugmentPolicy& policy, std::size_t height, std::size_t width) {
  if (!(policy.flip_prob >= 0.0f && policy.flip_prob <= 1.0f)) fail(ErrorKind::ConfigError, "flip_prob must lie in [0,1]");
  if (2 * policy.crop_pad >= std::min(height, width)) fail(ErrorKind::ConfigError, "crop_pad must be < min(H,W)/2");
  if (!(policy.rotation_max >= 0.0f)) fail(ErrorKind::ConfigError, "rotation_max must be >= 0");
}

std::vector<float> augment(std::span<const float> image, std::size_t height, std::size_t width,
                           const AugmentPolicy& policy, std::mt19937_64& rng) {
  std::vector<float> out(image.begin(), image.end());
  const auto h = static_cast<long>(height), w = static_cast<long>(width);
  auto sample = [&](const std::vector<float>& src, long y, long x) {
    y = std::clamp(y, 0L, h - 1);
    x = std::clamp(x, 0L, w - 1);
    return src[static_cast<std::size_t>(y * w + x)];
  };

  if (policy.crop_pad > 0) {
    const auto pad = static_cast<long>(policy.crop_pad);
    std::uniform_int_distribution<long> shift(-pad, pad);
    const long dy = shift(rng), dx = shift(rng);
    const std::vector<float> src = out;
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) out[static_cast<std::size_t>(y * w + x)] = sample(src, y + dy, x + dx);
  }
  if (policy.flip_prob > 0.0f && std::bernoulli_distribution(policy.flip_prob)(rng)) {
    for (long y = 0; y < h; ++y) std::reverse(out.begin() + y * w, out.begin() + (y + 1) * w);
  }
  if (policy.rotation_max > 0.0f) {
    std::uniform_real_distribution<double> angle(-policy.rotation_max, policy.rotation_max);
    const double theta = angle(rng) * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const double cy = (double(h) - 1.0) / 2.0, cx = (double(w) - 1.0) / 2.0;
    const std::vector<float> src = out;
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        // Inverse map from output to source coordinates.
        const double sy = c * (double(y) - cy) - s * (double(x) - cx) + cy;
        const double sx = s * (double(y) - cy) + c * (double(x) - cx) + cx;
        out[static_cast<std::size_t>(y * w + x)] = sample(src, std::lround(sy), std::lround(sx));
      }
  }
  for (float& v : out) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

std::vector<Batch> make_batches(const Dataset& ds, const BatchOptions& opts) {
  if (opts.batch_size == 0) fail(ErrorKind::ConfigError, "batch_size must be positive");
  if (opts.contrastive && opts.batch_size < 2) fail(ErrorKind::BatchTooSmall, "contrastive batches need >= 2 samples");
  validate(opts.policy, ds.height, ds.width);

  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (opts.shuffle) {
    std::mt19937_64 rng(opts.shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }

  const std::size_t pixels = ds.height * ds.width;
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
    const std::size_t n = std::min(opts.batch_size, order.size() - start);
    if (n < opts.batch_size && opts.drop_last) break;
    if (opts.contrastive && n < 2) fail(ErrorKind::BatchTooSmall, "trailing contrastive batch has one sample");
    Batch b;
    b.view1 = num::Tensor::matrix(n, pixels);
    if (opts.two_views) b.view2 = num::Tensor::matrix(n, pixels);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = order[start + i];
      const Sample& s = ds.samples[idx];
      b.indices.push_back(idx);
      b.activities.push_back(s.activity);
      for (int view = 0; view < (opts.two_views ? 2 : 1); ++view) {
        std::mt19937_64 rng(mix_seed(opts.shuffle_seed, idx * 2 + static_cast<std::size_t>(view)));
        const auto img = augment(s.image, ds.height, ds.width, opts.policy, rng);
        num::Tensor& dst = view == 0 ? b.view1 : b.view2;
        std::copy(img.begin(), img.end(), dst.values.begin() + static_cast<std::ptrdiff_t>(i * pixels));
      }
    }
    b.view_activities = b.activities;
    if (opts.two_views) b.view_activities.insert(b.view_activities.end(), b.activities.begin(), b.activities.end());
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace clef::data
