#include "clef/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "clef/error.hpp"

namespace clef::train {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

json to_json(const model::ArchConfig& a) {
  return json{{"image_height", a.image_height},
              {"image_width", a.image_width},
              {"patch", a.patch},
              {"width", a.width},
              {"layers", a.layers},
              {"heads", a.heads},
              {"text_width", a.text_width},
              {"text_layers", a.text_layers},
              {"text_heads", a.text_heads},
              {"vocab", a.vocab},
              {"context", a.context},
              {"embed_dim", a.embed_dim},
              {"mlp_ratio", a.mlp_ratio},
              {"share_text_encoder", a.share_text_encoder},
              {"head_classes", a.head_classes},
              {"init_logit_scale", a.init_logit_scale},
              {"max_logit_scale", a.max_logit_scale},
              {"pretrain_temperature", a.pretrain_temperature},
              {"learnable_pretrain_temp", a.learnable_pretrain_temp}};
}

model::ArchConfig arch_from_json(const json& j) {
  model::ArchConfig a;
  try {
    a.image_height = j.at("image_height");
    a.image_width = j.at("image_width");
    a.patch = j.at("patch");
    a.width = j.at("width");
    a.layers = j.at("layers");
    a.heads = j.at("heads");
    a.text_width = j.at("text_width");
    a.text_layers = j.at("text_layers");
    a.text_heads = j.at("text_heads");
    a.vocab = j.at("vocab");
    a.context = j.at("context");
    a.embed_dim = j.at("embed_dim");
    a.mlp_ratio = j.at("mlp_ratio");
    a.share_text_encoder = j.at("share_text_encoder");
    a.head_classes = j.at("head_classes");
    a.init_logit_scale = j.at("init_logit_scale");
    a.max_logit_scale = j.at("max_logit_scale");
    a.pretrain_temperature = j.at("pretrain_temperature");
    a.learnable_pretrain_temp = j.at("learnable_pretrain_temp");
  } catch (const json::exception& e) {
    fail(ErrorKind::FormatError, std::string("checkpoint architecture metadata: ") + e.what());
  }
  return a;
}

Checkpoint make_checkpoint(const model::ModelParams& params, const OptimState* state, json meta) {
  Checkpoint c;
  for (const auto& [name, t] : params.tensors) {
    num::Tensor copy(t.shape, t.values);
    c.tensors.emplace(name, std::move(copy));
  }
  if (state) {
    std::size_t i = 0;
    for (const auto& [name, t] : params.tensors) {
      if (i < state->m.size() && !state->m[i].empty()) {
        c.tensors.emplace("optim.m." + name, num::Tensor(t.shape, state->m[i]));
        c.tensors.emplace("optim.v." + name, num::Tensor(t.shape, state->v[i]));
      }
      ++i;
    }
    meta["optim_step"] = state->step;
  }
  meta["fingerprint"] = params.arch.fingerprint();
  meta["arch"] = to_json(params.arch);
  c.meta = std::move(meta);
  return c;
}

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}
  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void floats(std::vector<float>& out, std::size_t n, const char* what) {
    need(n * sizeof(float), what);
    out.resize(n);
    std::memcpy(out.data(), data_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) {
      fail(ErrorKind::FormatError, "truncated " + std::string(what) + " at offset " + std::to_string(pos_));
    }
  }
  const std::string& data_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string out = "CLEF";
  put<std::uint8_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.size() > 0xffff) fail(ErrorKind::FormatError, "tensor name too long: " + name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (std::size_t d : t.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out.append(reinterpret_cast<const char*>(t.values.data()), t.values.size() * sizeof(float));
  }
  const std::string meta = ckpt.meta.dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::IoError, "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorKind::IoError, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::IoError, "cannot read " + path.string());
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(data);
  if (r.bytes(4, "magic") != "CLEF") fail(ErrorKind::FormatError, "bad magic at offset 0");
  const auto version = r.get<std::uint8_t>("version");
  if (version != kCheckpointVersion) {
    fail(ErrorKind::VersionError, "checkpoint version " + std::to_string(version) + ", expected " +
                                      std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>("name length");
    std::string name = r.bytes(len, "tensor name");
    const auto rank = r.get<std::uint8_t>("rank");
    num::Shape shape;
    for (std::uint8_t k = 0; k < rank; ++k) shape.push_back(r.get<std::uint32_t>("dims"));
    num::Tensor t;
    t.shape = shape;
    r.floats(t.values, num::shape_size(shape), "tensor payload");
    if (!c.tensors.emplace(std::move(name), std::move(t)).second) {
      fail(ErrorKind::FormatError, "duplicate tensor name at offset " + std::to_string(r.pos()));
    }
  }
  const auto meta_len = r.get<std::uint32_t>("metadata length");
  const std::size_t meta_at = r.pos();
  const std::string meta = r.bytes(meta_len, "metadata");
  if (!r.done()) fail(ErrorKind::FormatError, "trailing bytes at offset " + std::to_string(r.pos()));
  c.meta = json::parse(meta, nullptr, false);
  if (c.meta.is_discarded() || !c.meta.is_object()) {
    fail(ErrorKind::FormatError, "metadata is not a JSON object at offset " + std::to_string(meta_at));
  }
  return c;
}

void restore_params(const Checkpoint& ckpt, model::ModelParams& params) {
  const std::string want = params.arch.fingerprint();
  if (ckpt.fingerprint() != want) {
    fail(ErrorKind::ArchMismatch, "checkpoint encoders " + ckpt.fingerprint() + " vs configured " + want);
  }
  const std::string text_prefix = std::string(model::kTextTower) + ".";
  const std::string desc_prefix = std::string(model::kDescTower) + ".";
  for (auto& [name, t] : params.tensors) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end() && name.rfind(desc_prefix, 0) == 0) {
      it = ckpt.tensors.find(text_prefix + name.substr(desc_prefix.size()));
    }
    if (it == ckpt.tensors.end()) continue;
    if (it->second.shape != t.shape) {
      fail(ErrorKind::ArchMismatch, "tensor " + name + " is " + num::shape_string(it->second.shape) +
                                        " in the checkpoint, " + num::shape_string(t.shape) + " in the model");
    }
    t.values = it->second.values;
  }
}

model::ModelParams params_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("arch")) fail(ErrorKind::FormatError, "checkpoint has no architecture metadata");
  model::ModelParams p = model::init_params(arch_from_json(ckpt.meta.at("arch")), 0);
  for (const auto& [name, t] : p.tensors) {
    if (!ckpt.tensors.count(name)) fail(ErrorKind::ArchMismatch, "checkpoint lacks tensor " + name);
  }
  restore_params(ckpt, p);
  return p;
}

}  // namespace clef::train
