#include "config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"
#include "toml.hpp"

namespace clef::cli {

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& want, const std::string& got) {
  fail(ErrorKind::ConfigError, "key '" + key + "': expected " + want + ", got '" + got + "'");
}

std::uint64_t to_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) bad_value(key, "a non-negative integer", s);
  return v;
}

double to_double(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  bad_value(key, "a number", s);
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  bad_value(key, "true or false", s);
}

std::vector<int> to_list(const std::string& key, const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(static_cast<int>(to_u64(key, item)));
  }
  return out;
}

// Shortest text that reads back to the same value.
template <typename T>
std::string fmt_float(T v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, end);
  // TOML wants a digit on both sides of the point and no bare integers for floats.
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

struct Entry {
  KeyInfo info;
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

template <typename Access>
Entry int_key(const std::string& name, const std::string& group, const std::string& help, Access acc) {
  return {{name, group, "int", help},
          [name, acc](Config& c, const std::string& v) { acc(c) = static_cast<std::decay_t<decltype(acc(c))>>(to_u64(name, v)); },
          [acc](const Config& c) { return std::to_string(acc(const_cast<Config&>(c))); }};
}

template <typename Access>
Entry float_key(const std::string& name, const std::string& group, const std::string& help, Access acc) {
  return {{name, group, "float", help},
          [name, acc](Config& c, const std::string& v) { acc(c) = static_cast<float>(to_double(name, v)); },
          [acc](const Config& c) { return fmt_float(acc(const_cast<Config&>(c))); }};
}

template <typename Access>
Entry bool_key(const std::string& name, const std::string& group, const std::string& help, Access acc) {
  return {{name, group, "bool", help}, [name, acc](Config& c, const std::string& v) { acc(c) = to_bool(name, v); },
          [acc](const Config& c) { return std::string(acc(const_cast<Config&>(c)) ? "true" : "false"); }};
}

template <typename Access>
Entry string_key(const std::string& name, const std::string& group, const std::string& help, Access acc) {
  return {{name, group, "string", help}, [acc](Config& c, const std::string& v) { acc(c) = v; },
          [acc](const Config& c) { return acc(const_cast<Config&>(c)); }};
}

#define FIELD(expr) [](Config& c) -> auto& { return expr; }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> all = [] {
    std::vector<Entry> e;
    // run
    e.push_back({{"task", "run", "string", "fer or aur"},
                 [](Config& c, const std::string& v) {
                   try {
                     c.run.task = c.synth.task = data::parse_task(v);
                   } catch (const Error&) {
                     bad_value("task", "fer or aur", v);
                   }
                 },
                 [](const Config& c) { return data::to_string(c.run.task); }});
    e.push_back({{"seed", "run", "int", "seed for data generation, init, batching and templates"},
                 [](Config& c, const std::string& v) { c.run.seed = c.synth.seed = to_u64("seed", v); },
                 [](const Config& c) { return std::to_string(c.run.seed); }});
    e.push_back(float_key("lambda", "run", "weight of the image-name term", FIELD(c.run.lambda)));
    e.push_back(int_key("batch_size", "run", "samples per batch", FIELD(c.run.batch_size)));
    e.push_back(int_key("epochs", "run", "training epochs", FIELD(c.run.epochs)));
    e.push_back(int_key("warmup_epochs", "run", "linear warmup epochs", FIELD(c.run.warmup_epochs)));
    e.push_back(float_key("lr", "run", "peak learning rate", FIELD(c.run.lr)));
    e.push_back(float_key("min_lr", "run", "learning rate at the end of the cosine decay", FIELD(c.run.min_lr)));
    e.push_back(float_key("weight_decay", "run", "decoupled weight decay", FIELD(c.run.adam.weight_decay)));
    e.push_back(float_key("beta1", "run", "first-moment decay", FIELD(c.run.adam.beta1)));
    e.push_back(float_key("beta2", "run", "second-moment decay", FIELD(c.run.adam.beta2)));
    e.push_back(float_key("adam_eps", "run", "AdamW epsilon", FIELD(c.run.adam.eps)));
    e.push_back(bool_key("use_activity_text", "run", "pre-train against activity texts", FIELD(c.run.use_activity_text)));
    e.push_back(bool_key("self_view_positives", "run", "only an image's own second view is positive",
                         FIELD(c.run.self_view_positives)));
    e.push_back(bool_key("symmetric_anchors", "run", "use both views as anchors", FIELD(c.run.symmetric_anchors)));
    e.push_back(bool_key("augment", "run", "augment pre-training views", FIELD(c.run.augment)));
    e.push_back(bool_key("use_pretrained_image", "run", "load the init checkpoint", FIELD(c.run.use_pretrained_image)));
    e.push_back(bool_key("use_names", "run", "train against label names", FIELD(c.run.use_names)));
    e.push_back(bool_key("use_descriptions", "run", "train against label descriptions", FIELD(c.run.use_descriptions)));
    e.push_back(bool_key("linear_head", "run", "linear classifier on image features", FIELD(c.run.linear_head)));
    e.push_back(bool_key("finetune_augment", "run", "augment fine-tuning images", FIELD(c.run.finetune_augment)));
    e.push_back(bool_key("class_weighting", "run", "inverse-frequency class weights", FIELD(c.run.class_weighting)));
    e.push_back(float_key("degenerate_f1", "run", "F1 of a class with no positives anywhere", FIELD(c.degenerate_f1)));
    e.push_back(string_key("inference", "run", "names, descriptions or head (default: from checkpoint)",
                           FIELD(c.inference)));
    e.push_back({{"classes", "run", "list", "comma-separated FER class ids to keep"},
                 [](Config& c, const std::string& v) { c.classes = to_list("classes", v); },
                 [](const Config& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.classes.size(); ++i) s += (i ? "," : "") + std::to_string(c.classes[i]);
                   return s;
                 }});
    // synth
    e.push_back(int_key("n_identities", "synth", "synthetic identities", FIELD(c.synth.n_identities)));
    e.push_back(int_key("n_activities", "synth", "synthetic activities", FIELD(c.synth.n_activities)));
    e.push_back(int_key("n_classes", "synth", "expression classes or AUs", FIELD(c.synth.n_classes)));
    e.push_back(int_key("n_attributes", "synth", "shared facial attributes", FIELD(c.synth.n_attributes)));
    e.push_back(int_key("attributes_per_class", "synth", "attributes switched on by a class",
                        FIELD(c.synth.attributes_per_class)));
    e.push_back(int_key("samples_per_activity", "synth", "samples per activity", FIELD(c.synth.samples_per_activity)));
    e.push_back(float_key("activity_target_peak", "synth", "share of an activity's target class",
                          FIELD(c.synth.activity_target_peak)));
    e.push_back(float_key("identity_signal", "synth", "identity template amplitude", FIELD(c.synth.identity_signal)));
    e.push_back(float_key("class_signal", "synth", "attribute pattern amplitude", FIELD(c.synth.class_signal)));
    e.push_back(float_key("noise_sigma", "synth", "pixel noise", FIELD(c.synth.noise_sigma)));
    e.push_back(float_key("aur_active_prob", "synth", "presence of a class attribute", FIELD(c.synth.aur_active_prob)));
    e.push_back(float_key("aur_spurious_prob", "synth", "presence of another attribute", FIELD(c.synth.aur_spurious_prob)));
    e.push_back({{"test_fraction", "synth", "share of identities held out by gen-data"},
                 [](Config& c, const std::string& v) { c.test_fraction = to_double("test_fraction", v); },
                 [](const Config& c) { return fmt_float(c.test_fraction); }});
    e.back().info.type = "float";
    // arch
    e.push_back({{"image_height", "arch", "int", "image rows"},
                 [](Config& c, const std::string& v) { c.arch.image_height = c.synth.height = to_u64("image_height", v); },
                 [](const Config& c) { return std::to_string(c.arch.image_height); }});
    e.push_back({{"image_width", "arch", "int", "image columns"},
                 [](Config& c, const std::string& v) { c.arch.image_width = c.synth.width = to_u64("image_width", v); },
                 [](const Config& c) { return std::to_string(c.arch.image_width); }});
    e.push_back(int_key("patch", "arch", "patch side", FIELD(c.arch.patch)));
    e.push_back(int_key("width", "arch", "image transformer width", FIELD(c.arch.width)));
    e.push_back(int_key("layers", "arch", "image transformer depth", FIELD(c.arch.layers)));
    e.push_back(int_key("heads", "arch", "image attention heads", FIELD(c.arch.heads)));
    e.push_back(int_key("text_width", "arch", "text transformer width", FIELD(c.arch.text_width)));
    e.push_back(int_key("text_layers", "arch", "text transformer depth", FIELD(c.arch.text_layers)));
    e.push_back(int_key("text_heads", "arch", "text attention heads", FIELD(c.arch.text_heads)));
    e.push_back(int_key("vocab", "arch", "hashed vocabulary size", FIELD(c.arch.vocab)));
    e.push_back(int_key("context", "arch", "text context length", FIELD(c.arch.context)));
    e.push_back(int_key("embed_dim", "arch", "joint embedding size", FIELD(c.arch.embed_dim)));
    e.push_back(int_key("mlp_ratio", "arch", "MLP expansion", FIELD(c.arch.mlp_ratio)));
    e.push_back(bool_key("share_text_encoder", "arch", "one text encoder for names and descriptions",
                         FIELD(c.arch.share_text_encoder)));
    e.push_back(float_key("init_logit_scale", "arch", "initial 1/tau", FIELD(c.arch.init_logit_scale)));
    e.push_back(float_key("max_logit_scale", "arch", "cap on 1/tau", FIELD(c.arch.max_logit_scale)));
    e.push_back(float_key("pretrain_temperature", "arch", "pre-training temperature", FIELD(c.arch.pretrain_temperature)));
    e.push_back(bool_key("learnable_pretrain_temp", "arch", "learn the pre-training temperatures",
                         FIELD(c.arch.learnable_pretrain_temp)));
    // paths
    e.push_back(string_key("data", "paths", "dataset JSONL", FIELD(c.data)));
    e.push_back(string_key("test_data", "paths", "held-out dataset JSONL (sweep-lambda)", FIELD(c.test_data)));
    e.push_back(string_key("labels", "paths", "label JSONL (default: synthetic labels)", FIELD(c.labels)));
    e.push_back(string_key("unseen_labels", "paths", "labels of the held-out classes", FIELD(c.unseen_labels)));
    e.push_back(string_key("init", "paths", "checkpoint to start fine-tuning from", FIELD(c.init)));
    e.push_back(string_key("ckpt", "paths", "checkpoint to evaluate", FIELD(c.ckpt)));
    e.push_back(string_key("out", "paths", "output file or run directory", FIELD(c.out)));
    e.push_back(string_key("report", "paths", "report JSON path", FIELD(c.report)));
    e.push_back(string_key("activity_templates", "paths", "activity prompt templates", FIELD(c.activity_templates)));
    e.push_back(string_key("description_templates", "paths", "description prompt templates",
                           FIELD(c.description_templates)));
    return e;
  }();
  return all;
}

#undef FIELD

const Entry& find(const std::string& key) {
  for (const auto& e : entries())
    if (e.info.name == key) return e;
  fail(ErrorKind::ConfigError, "unknown key '" + key + "'");
}

std::string canonical(std::string key) {
  for (char& ch : key)
    if (ch == '-') ch = '_';
  return key;
}

std::string toml_scalar(const toml::node& node, const std::string& key) {
  if (auto v = node.as_string()) return v->get();
  if (auto v = node.as_integer()) return std::to_string(v->get());
  if (auto v = node.as_floating_point()) return fmt_float(v->get());
  if (auto v = node.as_boolean()) return v->get() ? "true" : "false";
  if (auto arr = node.as_array()) {
    std::string s;
    for (const auto& item : *arr) s += (s.empty() ? "" : ",") + toml_scalar(item, key);
    return s;
  }
  fail(ErrorKind::ConfigError, "key '" + key + "': unsupported TOML value");
}

void apply(Config& cfg, const std::string& key, const std::string& value) {
  set_key(cfg, key, value);
  cfg.explicit_keys.insert(key);
}

}  // namespace

bool Config::arch_overridden() const {
  for (const auto& e : entries())
    if (e.info.group == "arch" && explicit_keys.count(e.info.name)) return true;
  return false;
}

const std::vector<KeyInfo>& registry() {
  static const std::vector<KeyInfo> infos = [] {
    std::vector<KeyInfo> out;
    for (const auto& e : entries()) out.push_back(e.info);
    return out;
  }();
  return infos;
}

void set_key(Config& cfg, const std::string& key, const std::string& value) { find(key).set(cfg, value); }

std::string get_key(const Config& cfg, const std::string& key) { return find(key).get(cfg); }

std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& args) {
  static const std::map<std::string, std::pair<std::string, std::string>> switches = {
      {"no_names", {"use_names", "false"}},
      {"no_descriptions", {"use_descriptions", "false"}},
      {"linear_head", {"linear_head", "true"}},
      {"no_shared_text", {"share_text_encoder", "false"}},
  };
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0 || a.size() == 2) fail(ErrorKind::ConfigError, "unexpected argument '" + a + "'");
    std::string key = canonical(a.substr(2));
    std::string value;
    bool has_value = false;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = a.substr(2 + eq + 1);
      key = key.substr(0, eq);
      has_value = true;
    }
    if (!has_value) {
      if (auto it = switches.find(key); it != switches.end()) {
        out.push_back(it->second);
        continue;
      }
    }
    find(key);  // rejects unknown keys before looking for a value
    if (!has_value) {
      if (i + 1 >= args.size()) fail(ErrorKind::ConfigError, "key '" + key + "': missing value");
      value = args[++i];
    }
    out.emplace_back(key, value);
  }
  return out;
}

Config resolve(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& flag_args,
               const char* env_seed) {
  Config cfg;
  if (env_seed && *env_seed) {
    try {
      apply(cfg, "seed", env_seed);
    } catch (const Error&) {
      fail(ErrorKind::ConfigError, std::string("key 'seed' (from CLEF_SEED): expected a non-negative integer, got '") +
                                       env_seed + "'");
    }
  }
  if (file) {
    toml::table tbl;
    try {
      tbl = toml::parse_file(file->string());
    } catch (const toml::parse_error& e) {
      std::ostringstream msg;
      msg << file->string() << ":" << e.source().begin.line << ": " << e.description();
      fail(ErrorKind::ConfigError, msg.str());
    }
    static const std::set<std::string> groups = {"run", "synth", "arch", "paths"};
    for (const auto& [k, node] : tbl) {
      const std::string key(k.str());
      if (auto sub = node.as_table()) {
        if (!groups.count(key)) fail(ErrorKind::ConfigError, "unknown key '" + key + "'");
        for (const auto& [k2, n2] : *sub) {
          const std::string inner(k2.str());
          if (find(inner).info.group != key) {
            fail(ErrorKind::ConfigError, "key '" + inner + "' belongs in [" + find(inner).info.group + "]");
          }
          apply(cfg, inner, toml_scalar(n2, inner));
        }
      } else {
        apply(cfg, key, toml_scalar(node, key));
      }
    }
  }
  for (const auto& [k, v] : parse_overrides(flag_args)) apply(cfg, k, v);
  return cfg;
}

std::string to_toml(const Config& cfg) {
  std::string out = "# Resolved configuration. Pass back with --config to repeat the run.\n";
  for (const char* group : {"run", "synth", "arch", "paths"}) {
    out += std::string("\n[") + group + "]\n";
    for (const auto& e : entries()) {
      if (e.info.group != group) continue;
      const std::string v = e.get(cfg);
      out += e.info.name + " = ";
      if (e.info.type == "string" || e.info.type == "list") {
        // JSON string escapes are a subset of TOML basic-string escapes.
        out += nlohmann::json(v).dump();
      } else {
        out += v;
      }
      out += "\n";
    }
  }
  return out;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IoError:
    case ErrorKind::NonFinite:
      return 2;
    default:
      return 1;
  }
}

}  // namespace clef::cli
