#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "clef/numerics/graph.hpp"
#include "clef/numerics/tensor.hpp"
#include "clef/text/tokenizer.hpp"

namespace clef::model {

// Toy-scale defaults: a 16x16 ViT with 4x4 patches and a two-block text
// transformer, both projecting into a 16-d shared space.
struct ArchConfig {
  std::size_t image_height = 16;
  std::size_t image_width = 16;
  std::size_t patch = 4;
  std::size_t width = 32;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t text_width = 32;
  std::size_t text_layers = 2;
  std::size_t text_heads = 2;
  std::size_t vocab = text::kDefaultVocab;
  std::size_t context = text::kDefaultContext;
  std::size_t embed_dim = 16;
  std::size_t mlp_ratio = 4;

  bool share_text_encoder = true;
  // When nonzero, adds a linear classifier on the pooled image features.
  std::size_t head_classes = 0;

  float init_logit_scale = 1.0f / 0.07f;
  float max_logit_scale = 100.0f;
  float pretrain_temperature = 0.25f;
  bool learnable_pretrain_temp = false;

  std::size_t patches() const { return (image_height / patch) * (image_width / patch); }
  // Encoder dimensions only; heads and temperatures are not part of it.
  std::string fingerprint() const;
};

void validate(const ArchConfig& arch);

// Named parameters in a fixed (lexicographic) order.
struct ModelParams {
  ArchConfig arch;
  std::map<std::string, num::Tensor> tensors;

  num::Tensor& at(const std::string& name);
  const num::Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors.count(name) != 0; }
  std::vector<num::Tensor*> pointers();
  std::size_t parameter_count() const;
  void zero_grad();
  bool operator==(const ModelParams& other) const;
};

ModelParams init_params(const ArchConfig& arch, std::uint64_t seed);

// Text tower prefixes. The description tower exists only when the text
// encoder is not shared.
inline constexpr const char* kTextTower = "text";
inline constexpr const char* kDescTower = "desc_text";

// Registers each parameter once per graph.
class Binder {
 public:
  Binder(num::Graph& g, ModelParams& p) : graph_(g), params_(p) {}
  num::Var operator()(const std::string& name);
  num::Graph& graph() { return graph_; }
  ModelParams& params() { return params_; }

 private:
  num::Graph& graph_;
  ModelParams& params_;
  std::map<std::string, num::Var> bound_;
};

struct ImageOutput {
  num::Var pooled;     // B x width, after the final layer norm
  num::Var embedding;  // B x embed_dim, unit rows
};

// images: B x (H*W) pixel rows.
ImageOutput encode_image(Binder& b, const num::Tensor& images);
num::Var encode_text(Binder& b, std::span<const text::TokenizedText> tokens, const std::string& tower = kTextTower);

// Tower used for descriptions under the current sharing setting.
std::string description_tower(const ArchConfig& arch);

// exp(log scale), clamped to the configured maximum. 1x1.
num::Var logit_scale(Binder& b);
// Pre-training scale 1/eps; either fixed or one of the learned t1/t2 (which = 1 or 2).
num::Var pretrain_scale(Binder& b, int which);

// Linear head logits on pooled features (B x head_classes).
num::Var head_logits(Binder& b, num::Var pooled);

}  // namespace clef::model
