#include "clef/checks/grad_suite.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <random>

#include "clef/error.hpp"
#include "clef/losses/losses.hpp"
#include "clef/model/encoders.hpp"
#include "clef/numerics/grad_check.hpp"
#include "clef/numerics/ops.hpp"
#include "clef/text/tokenizer.hpp"

namespace clef::checks {

using num::Graph;
using num::Tensor;
using num::Var;

namespace {

Tensor uniform(std::mt19937_64& rng, num::Shape shape, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<float> d(lo, hi);
  for (auto& v : t.values) v = d(rng);
  return t;
}

// Loss inputs are raw leaves pushed through the row normalization, so each
// check covers the embedding normalization too.
Var unit(Graph& g, Tensor& t) { return num::l2_normalize_rows(g.leaf(t)); }

struct Case {
  std::string name;
  std::function<num::GradCheckResult(std::uint64_t)> run;
};

num::GradCheckResult supcon_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor a = uniform(rng, {4, 6}), c = uniform(rng, {6, 6}), s = Tensor::scalar(2.5f);
  const std::vector<int> al = {0, 1, 0, 2}, cl = {0, 1, 2, 0, 1, 1};
  const std::vector<std::ptrdiff_t> self = {0, 1, 2, 3};
  const auto masks = losses::build_pair_masks(al, cl, self);
  std::vector<Tensor*> p = {&a, &c, &s};
  return num::grad_check([&](Graph& g) { return losses::supcon_loss(unit(g, a), unit(g, c), masks, g.leaf(s)); }, p);
}

// Float32 central differences resolve about 6e-8 * |loss| / step, and the
// symmetric layout sums twice as many anchor terms, so the instances are kept
// small enough that the loss stays in single digits.
num::GradCheckResult pretrain_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  num::GradCheckResult worst;
  for (const bool symmetric : {false, true}) {
    const std::size_t n = symmetric ? 2 : 3;
    Tensor zi = uniform(rng, {n, 6}), zi2 = uniform(rng, {n, 6}), za = uniform(rng, {n, 6});
    Tensor s1 = Tensor::scalar(2.0f), s2 = Tensor::scalar(1.5f);
    const std::vector<int> labels = symmetric ? std::vector<int>{0, 1} : std::vector<int>{0, 1, 0};
    std::vector<Tensor*> p = {&zi, &zi2, &za, &s1, &s2};
    const auto r = num::grad_check(
        [&](Graph& g) {
          return losses::pretrain_loss(unit(g, zi), unit(g, zi2), unit(g, za), labels, g.leaf(s1), g.leaf(s2),
                                       symmetric)
              .total;
        },
        p);
    worst.max_relative_error = std::max(worst.max_relative_error, r.max_relative_error);
    worst.coords_checked += r.coords_checked;
  }
  return worst;
}

num::GradCheckResult name_description_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor zd = uniform(rng, {4, 6}), zn = uniform(rng, {4, 6}), s = Tensor::scalar(5.0f);
  std::vector<Tensor*> p = {&zd, &zn, &s};
  return num::grad_check(
      [&](Graph& g) { return losses::name_description_loss(unit(g, zd), unit(g, zn), g.leaf(s)); }, p);
}

num::GradCheckResult fer_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor zi = uniform(rng, {5, 6}), zn = uniform(rng, {3, 6}), s = Tensor::scalar(5.0f);
  const std::vector<int> targets = {0, 2, 1, 2, 0};
  const std::vector<float> w = {0.5f, 1.25f, 1.25f};
  std::vector<Tensor*> p = {&zi, &zn, &s};
  return num::grad_check(
      [&](Graph& g) { return losses::fer_image_name_loss(unit(g, zi), unit(g, zn), targets, w, g.leaf(s)); }, p);
}

num::GradCheckResult au_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor zi = uniform(rng, {4, 6}), zn = uniform(rng, {3, 6}), s = Tensor::scalar(5.0f);
  const std::vector<std::uint8_t> targets = {1, 0, 1, 0, 0, 0, 1, 1, 0, 0, 1, 1};
  const std::vector<float> w = {0.8f, 1.5f, 0.7f};
  std::vector<Tensor*> p = {&zi, &zn, &s};
  return num::grad_check(
      [&](Graph& g) { return losses::au_image_name_loss(unit(g, zi), unit(g, zn), targets, w, g.leaf(s)); }, p);
}

num::GradCheckResult finetune_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor zi = uniform(rng, {4, 6}), zn = uniform(rng, {3, 6}), zd = uniform(rng, {3, 6}), s = Tensor::scalar(5.0f);
  const std::vector<int> fer = {2, 0, 1, 1};
  const std::vector<std::uint8_t> au = {1, 0, 1, 0, 1, 0, 0, 0, 1, 1, 1, 0};
  const std::vector<float> w = {1.0f, 0.6f, 1.4f};
  std::vector<Tensor*> p = {&zi, &zn, &zd, &s};
  num::GradCheckResult worst;
  for (int task = 0; task < 2; ++task) {
    const auto r = num::grad_check(
        [&](Graph& g) {
          Var n = unit(g, zn), scale = g.leaf(s);
          Var in = task == 0 ? losses::fer_image_name_loss(unit(g, zi), n, fer, w, scale)
                             : losses::au_image_name_loss(unit(g, zi), n, au, w, scale);
          return losses::finetune_loss(in, losses::name_description_loss(unit(g, zd), n, scale), 2.0f);
        },
        p);
    worst.max_relative_error = std::max(worst.max_relative_error, r.max_relative_error);
    worst.coords_checked += r.coords_checked;
  }
  return worst;
}

model::ModelParams perturbed_params(std::uint64_t seed, std::mt19937_64& rng) {
  model::ArchConfig arch;
  arch.head_classes = 3;
  model::ModelParams p = model::init_params(arch, seed);
  // Larger weights than the init scale so every path carries signal.
  std::uniform_real_distribution<float> d(-0.2f, 0.2f);
  for (auto& [name, t] : p.tensors)
    if (!name.ends_with(".g") && name != "log_logit_scale")
      for (float& v : t.values) v += d(rng);
  return p;
}

std::vector<Tensor*> tower(model::ModelParams& p, const std::string& prefix, bool with_head = false) {
  std::vector<Tensor*> out;
  for (auto& [name, t] : p.tensors)
    if (name.rfind(prefix, 0) == 0 || (with_head && name.rfind("head.", 0) == 0)) out.push_back(&t);
  return out;
}

constexpr num::GradCheckOptions kEncoderCheck{.step = 1e-3f, .max_coords_per_tensor = 6, .seed = 1};

num::GradCheckResult image_encoder_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  model::ModelParams p = perturbed_params(seed, rng);
  const Tensor images = uniform(rng, {2, p.arch.image_height * p.arch.image_width}, 0.0f, 1.0f);
  const Tensor w = uniform(rng, {2, p.arch.embed_dim}), wh = uniform(rng, {2, 3});
  auto params = tower(p, "visual.", true);
  return num::grad_check(
      [&](Graph& g) {
        model::Binder b(g, p);
        const auto img = model::encode_image(b, images);
        return num::sum_all(img.embedding * g.constant(w)) + num::sum_all(model::head_logits(b, img.pooled) * g.constant(wh));
      },
      params, kEncoderCheck);
}

num::GradCheckResult text_encoder_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  model::ModelParams p = perturbed_params(seed, rng);
  const std::vector<text::TokenizedText> toks = {text::tokenize("cheek raiser"), text::tokenize("the jaw is dropped")};
  const Tensor w = uniform(rng, {2, p.arch.embed_dim});
  auto params = tower(p, "text.");
  return num::grad_check(
      [&](Graph& g) {
        model::Binder b(g, p);
        return num::sum_all(model::encode_text(b, toks) * g.constant(w));
      },
      params, kEncoderCheck);
}

const std::vector<Case>& cases() {
  static const std::vector<Case> all = {
      {"supcon", supcon_case},
      {"pretrain", pretrain_case},
      {"name_description", name_description_case},
      {"fer_image_name", fer_case},
      {"au_image_name", au_case},
      {"finetune", finetune_case},
      {"image_encoder", image_encoder_case},
      {"text_encoder", text_encoder_case},
  };
  return all;
}

}  // namespace

std::vector<std::string> grad_case_names() {
  std::vector<std::string> out;
  for (const auto& c : cases()) out.push_back(c.name);
  return out;
}

std::vector<GradCase> run_grad_suite(const std::vector<std::string>& only, std::uint64_t seed) {
  const auto names = grad_case_names();
  for (const auto& n : only) {
    if (std::find(names.begin(), names.end(), n) == names.end()) {
      fail(ErrorKind::ConfigError, "unknown gradient check '" + n + "'");
    }
  }
  std::vector<GradCase> out;
  for (const auto& c : cases()) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = c.run(seed);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back({c.name, r.max_relative_error, r.coords_checked, secs, r.max_relative_error < kGradTolerance});
  }
  return out;
}

}  // namespace clef::checks
