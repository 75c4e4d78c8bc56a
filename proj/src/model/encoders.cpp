#include "clef/model/encoders.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "clef/data/synth.hpp"
#include "clef/error.hpp"
#include "clef/numerics/ops.hpp"

namespace clef::model {

using num::Graph;
using num::Tensor;
using num::Var;

std::string ArchConfig::fingerprint() const {
  std::ostringstream os;
  os << "img" << image_height << "x" << image_width << "p" << patch << "w" << width << "l" << layers << "h" << heads
     << "-txt" << text_width << "l" << text_layers << "h" << text_heads << "v" << vocab << "c" << context << "-d"
     << embed_dim << "m" << mlp_ratio;
  return os.str();
}

void validate(const ArchConfig& a) {
  auto bad = [](const std::string& what) { fail(ErrorKind::ConfigError, what); };
  if (a.image_height == 0 || a.image_width == 0 || a.patch == 0) bad("image dims and patch must be positive");
  if (a.image_height % a.patch || a.image_width % a.patch) bad("patch must divide image height and width");
  if (a.width == 0 || a.text_width == 0 || a.embed_dim == 0 || a.mlp_ratio == 0) bad("widths must be positive");
  if (a.heads == 0 || a.width % a.heads) bad("heads must divide width");
  if (a.text_heads == 0 || a.text_width % a.text_heads) bad("text_heads must divide text_width");
  if (a.vocab <= text::kReservedIds) bad("vocab too small");
  if (a.context < 2) bad("context must hold BOS and EOS");
  if (!(a.init_logit_scale > 0.0f) || !(a.max_logit_scale >= a.init_logit_scale)) bad("logit scale bounds");
  if (!(a.pretrain_temperature > 0.0f)) bad("pretrain_temperature must be > 0");
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) fail(ErrorKind::ArchMismatch, "missing parameter " + name);
  return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) fail(ErrorKind::ArchMismatch, "missing parameter " + name);
  return it->second;
}

std::vector<Tensor*> ModelParams::pointers() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : tensors) out.push_back(&t);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) n += t.size();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : tensors) t.zero_grad();
}

bool ModelParams::operator==(const ModelParams& other) const {
  if (tensors.size() != other.tensors.size()) return false;
  for (const auto& [name, t] : tensors) {
    auto it = other.tensors.find(name);
    if (it == other.tensors.end() || it->second.shape != t.shape || it->second.values != t.values) return false;
  }
  return true;
}

namespace {

struct Initializer {
  ModelParams& p;
  std::uint64_t seed;

  void normal(const std::string& name, std::size_t rows, std::size_t cols) {
    Tensor t = Tensor::matrix(rows, cols);
    std::mt19937_64 rng(data::mix_seed(seed, text::stable_hash(name)));
    std::normal_distribution<float> dist(0.0f, 1.0f);
    for (float& v : t.values) {
      float z = dist(rng);
      while (std::abs(z) > 2.0f) z = dist(rng);
      v = 0.02f * z;
    }
    add(name, std::move(t));
  }
  void fill(const std::string& name, std::size_t rows, std::size_t cols, float value) {
    add(name, Tensor::matrix(rows, cols, value));
  }
  void add(const std::string& name, Tensor t) {
    t.requires_grad = true;
    p.tensors[name] = std::move(t);
  }
  void layer_norm(const std::string& prefix, std::size_t width) {
    fill(prefix + ".g", 1, width, 1.0f);
    fill(prefix + ".b", 1, width, 0.0f);
  }
  void linear(const std::string& prefix, std::size_t in, std::size_t out) {
    normal(prefix + ".w", in, out);
    fill(prefix + ".b", 1, out, 0.0f);
  }
  void blocks(const std::string& prefix, std::size_t n, std::size_t width, std::size_t ratio) {
    for (std::size_t l = 0; l < n; ++l) {
      const std::string b = prefix + ".blocks." + std::to_string(l);
      layer_norm(b + ".ln1", width);
      linear(b + ".attn.qkv", width, 3 * width);
      linear(b + ".attn.out", width, width);
      layer_norm(b + ".ln2", width);
      linear(b + ".mlp.fc", width, ratio * width);
      linear(b + ".mlp.proj", ratio * width, width);
    }
  }
  void text_tower(const std::string& prefix, const ArchConfig& a) {
    normal(prefix + ".token_embedding", a.vocab, a.text_width);
    normal(prefix + ".pos", a.context, a.text_width);
    blocks(prefix, a.text_layers, a.text_width, a.mlp_ratio);
    layer_norm(prefix + ".ln_final", a.text_width);
    normal(prefix + ".proj", a.text_width, a.embed_dim);
  }
};

Var transformer(Binder& b, const std::string& prefix, std::size_t n_layers, Var x, std::size_t seq_len,
                std::size_t heads, std::span<const std::uint8_t> key_valid) {
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::string p = prefix + ".blocks." + std::to_string(l);
    Var h = num::layer_norm(x, b(p + ".ln1.g"), b(p + ".ln1.b"));
    Var qkv = num::matmul(h, b(p + ".attn.qkv.w")) + b(p + ".attn.qkv.b");
    Var att = num::attention(qkv, seq_len, heads, key_valid);
    x = x + (num::matmul(att, b(p + ".attn.out.w")) + b(p + ".attn.out.b"));
    h = num::layer_norm(x, b(p + ".ln2.g"), b(p + ".ln2.b"));
    h = num::quick_gelu(num::matmul(h, b(p + ".mlp.fc.w")) + b(p + ".mlp.fc.b"));
    x = x + (num::matmul(h, b(p + ".mlp.proj.w")) + b(p + ".mlp.proj.b"));
  }
  return x;
}

}  // namespace

ModelParams init_params(const ArchConfig& arch, std::uint64_t seed) {
  validate(arch);
  ModelParams p;
  p.arch = arch;
  Initializer init{p, seed};
  const std::size_t tokens = arch.patches() + 1;
  init.linear("visual.patch_proj", arch.patch * arch.patch, arch.width);
  init.normal("visual.cls", 1, arch.width);
  init.normal("visual.pos", tokens, arch.width);
  init.blocks("visual", arch.layers, arch.width, arch.mlp_ratio);
  init.layer_norm("visual.ln_post", arch.width);
  init.normal("visual.proj", arch.width, arch.embed_dim);

  init.text_tower(kTextTower, arch);
  if (!arch.share_text_encoder) {
    // Both towers start from the same weights.
    for (const auto& [name, t] : std::map<std::string, Tensor>(p.tensors)) {
      if (name.rfind(std::string(kTextTower) + ".", 0) == 0) {
        p.tensors[std::string(kDescTower) + name.substr(std::string(kTextTower).size())] = t;
      }
    }
  }

  init.fill("log_logit_scale", 1, 1, std::log(arch.init_logit_scale));
  if (arch.learnable_pretrain_temp) {
    init.fill("pretrain.t1", 1, 1, std::log(1.0f / arch.pretrain_temperature));
    init.fill("pretrain.t2", 1, 1, std::log(1.0f / arch.pretrain_temperature));
  }
  if (arch.head_classes > 0) init.linear("head", arch.width, arch.head_classes);
  return p;
}

Var Binder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = graph_.leaf(params_.at(name));
  bound_.emplace(name, v);
  return v;
}

// Pixels in [0, 1] are centred before patch projection. Without this the cls
// token of an untrained encoder is nearly the same for every image.
constexpr float kPixelMean = 0.5f;
constexpr float kPixelStd = 0.25f;

ImageOutput encode_image(Binder& b, const Tensor& images) {
  const ArchConfig& a = b.params().arch;
  const std::size_t H = a.image_height, W = a.image_width, P = a.patch;
  const std::size_t pixels = H * W;
  if (images.cols() != pixels || images.size() == 0) {
    fail(ErrorKind::ShapeMismatch, "images " + num::shape_string(images.shape) + ", expected rows of " +
                                       std::to_string(pixels) + " pixels");
  }
  const std::size_t batch = images.rows(), T = a.patches(), seq = T + 1;
  const std::size_t gw = W / P;

  Tensor patches = Tensor::matrix(batch * T, P * P);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t py = t / gw, px = t % gw;
      float* dst = patches.values.data() + (n * T + t) * P * P;
      for (std::size_t y = 0; y < P; ++y)
        for (std::size_t x = 0; x < P; ++x)
          dst[y * P + x] = (images.at(n, (py * P + y) * W + px * P + x) - kPixelMean) / kPixelStd;
    }

  Graph& g = b.graph();
  Var emb = num::matmul(g.constant(std::move(patches)), b("visual.patch_proj.w")) + b("visual.patch_proj.b");
  const Var parts[] = {b("visual.cls"), emb};
  Var pool = num::concat_rows(parts);

  std::vector<std::size_t> order(batch * seq), pos(batch * seq);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t t = 0; t < seq; ++t) {
      order[n * seq + t] = t == 0 ? 0 : 1 + n * T + (t - 1);
      pos[n * seq + t] = t;
    }
  Var x = num::gather_rows(pool, order) + num::gather_rows(b("visual.pos"), pos);

  const std::vector<std::uint8_t> valid(batch * seq, 1);
  x = transformer(b, "visual", a.layers, x, seq, a.heads, valid);

  std::vector<std::size_t> cls_rows(batch);
  for (std::size_t n = 0; n < batch; ++n) cls_rows[n] = n * seq;
  Var pooled = num::layer_norm(num::gather_rows(x, cls_rows), b("visual.ln_post.g"), b("visual.ln_post.b"));
  Var z = num::l2_normalize_rows(num::matmul(pooled, b("visual.proj")));
  return {pooled, z};
}

Var encode_text(Binder& b, std::span<const text::TokenizedText> tokens, const std::string& tower) {
  const ArchConfig& a = b.params().arch;
  if (tokens.empty()) fail(ErrorKind::EmptyInput, "no texts to encode");
  // Positions past the longest sequence are pads that no query attends to,
  // so trimming them leaves every pooled output unchanged.
  std::size_t len = 0;
  for (const auto& t : tokens) {
    if (t.ids.size() != a.context || t.true_len == 0 || t.end_index >= t.true_len) {
      fail(ErrorKind::ShapeMismatch, "token sequence does not match context " + std::to_string(a.context));
    }
    len = std::max(len, t.true_len);
  }
  const std::size_t batch = tokens.size();
  std::vector<std::size_t> ids(batch * len), pos(batch * len), ends(batch);
  std::vector<std::uint8_t> valid(batch * len);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t t = 0; t < len; ++t) {
      const std::int32_t id = tokens[n].ids[t];
      if (id < 0 || static_cast<std::size_t>(id) >= a.vocab) {
        fail(ErrorKind::TokenOutOfRange, "token id " + std::to_string(id) + " >= vocab " + std::to_string(a.vocab));
      }
      ids[n * len + t] = static_cast<std::size_t>(id);
      pos[n * len + t] = t;
      valid[n * len + t] = t < tokens[n].true_len ? 1 : 0;
    }
    ends[n] = n * len + tokens[n].end_index;
  }

  Var x = num::gather_rows(b(tower + ".token_embedding"), ids) + num::gather_rows(b(tower + ".pos"), pos);
  x = transformer(b, tower, a.text_layers, x, len, a.text_heads, valid);
  Var pooled = num::layer_norm(num::gather_rows(x, ends), b(tower + ".ln_final.g"), b(tower + ".ln_final.b"));
  return num::l2_normalize_rows(num::matmul(pooled, b(tower + ".proj")));
}

std::string description_tower(const ArchConfig& arch) { return arch.share_text_encoder ? kTextTower : kDescTower; }

namespace {

Var clamped_exp(Binder& b, const std::string& name, float max_value) {
  Var log_scale = b(name);
  if (log_scale.item() > std::log(max_value)) return b.graph().constant(Tensor::scalar(max_value));
  return num::exp(log_scale);
}

}  // namespace

Var logit_scale(Binder& b) { return clamped_exp(b, "log_logit_scale", b.params().arch.max_logit_scale); }

Var pretrain_scale(Binder& b, int which) {
  const ArchConfig& a = b.params().arch;
  if (!a.learnable_pretrain_temp) return b.graph().constant(Tensor::scalar(1.0f / a.pretrain_temperature));
  return clamped_exp(b, which == 1 ? "pretrain.t1" : "pretrain.t2", a.max_logit_scale);
}

Var head_logits(Binder& b, Var pooled) {
  if (b.params().arch.head_classes == 0) fail(ErrorKind::ConfigError, "model has no linear head");
  return num::matmul(pooled, b("head.w")) + b("head.b");
}

}  // namespace clef::model
