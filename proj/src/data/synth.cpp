#include "clef/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "clef/error.hpp"

namespace clef::data {
namespace {

constexpr const char* kExpressionNames[] = {"anger",     "contempt", "disgust", "fear",
                                            "happiness", "neutral",  "sadness", "surprise"};

// Short phrases keep every rendered prompt inside the 32-token text context.
constexpr const char* kAttributePhrases[] = {
    "inner brows raised", "outer brows raised", "brows lowered",         "cheeks raised",
    "eyelids tightened",  "nose wrinkled",      "upper lip raised",      "lip corners pulled up",
    "lip corners pulled down", "chin raised",   "lips parted",           "jaw dropped"};

constexpr const char* kAttributeNames[] = {
    "inner brow raiser", "outer brow raiser",  "brow lowerer", "cheek raiser",
    "lid tightener",     "nose wrinkler",      "upper lip raiser", "lip corner puller",
    "lip corner depressor", "chin raiser",     "lips part",    "jaw drop"};

// Aligned with kExpressionNames, since activity a targets class a % C.
constexpr const char* kScenarios[] = {"harsh insults",  "a rude remark", "an unpleasant smell", "a physical threat",
                                      "a funny joke",   "a calm interview", "a sad documentary", "a sudden loud sound"};

std::string join_clauses(const std::vector<std::string>& clauses) {
  std::string out;
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    if (i > 0) out += (i + 1 == clauses.size()) ? " and " : ", ";
    out += clauses[i];
  }
  return out;
}

void normalize_peak(std::vector<float>& v) {
  float peak = 0.0f;
  for (float x : v) peak = std::max(peak, std::abs(x));
  if (peak > 0.0f)
    for (float& x : v) x /= peak;
}

// Faces are roughly bilateral, so identities and attributes are drawn
// left-right symmetric; a horizontal flip then keeps an image's meaning.
void mirror(std::vector<float>& field, std::size_t h, std::size_t w) {
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w / 2; ++x) {
      float& a = field[y * w + x];
      float& b = field[y * w + (w - 1 - x)];
      a = b = a + b;
    }
  normalize_peak(field);
}

std::vector<float> blob_field(std::mt19937_64& rng, std::size_t h, std::size_t w, int blobs) {
  std::vector<float> field(h * w, 0.0f);
  std::uniform_real_distribution<float> ry(0.0f, float(h - 1)), rx(0.0f, float(w - 1));
  std::uniform_real_distribution<float> rs(1.5f, 3.5f), ra(-1.0f, 1.0f);
  for (int b = 0; b < blobs; ++b) {
    const float cy = ry(rng), cx = rx(rng), s = rs(rng), a = ra(rng);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const float d2 = (float(y) - cy) * (float(y) - cy) + (float(x) - cx) * (float(x) - cx);
        field[y * w + x] += a * std::exp(-d2 / (2.0f * s * s));
      }
  }
  mirror(field, h, w);
  return field;
}

std::vector<float> bar_pattern(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  std::vector<float> field(h * w, 0.0f);
  std::uniform_real_distribution<float> ry(1.0f, float(h) - 2.0f), rx(1.0f, float(w) - 2.0f);
  std::uniform_real_distribution<float> rl(2.0f, 4.0f), rs(0.7f, 1.2f);
  std::bernoulli_distribution horizontal(0.5), positive(0.5);
  const float cy = ry(rng), cx = rx(rng), sl = rl(rng), ss = rs(rng);
  const bool horiz = horizontal(rng);
  const float sign = positive(rng) ? 1.0f : -1.0f;
  const float sy = horiz ? ss : sl, sx = horiz ? sl : ss;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const float dy = (float(y) - cy) / sy, dx = (float(x) - cx) / sx;
      field[y * w + x] = sign * std::exp(-0.5f * (dy * dy + dx * dx));
    }
  mirror(field, h, w);
  return field;
}

double n_choose_k(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * double(n - k + i) / double(i);
  return r;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

void validate(const SynthConfig& cfg) {
  auto bad = [](const std::string& what) { fail(ErrorKind::ConfigError, what); };
  if (cfg.n_identities == 0 || cfg.n_activities == 0 || cfg.n_classes < 2) bad("need identities, activities and >= 2 classes");
  if (cfg.height < 2 || cfg.width < 2) bad("image must be at least 2x2");
  if (cfg.attributes_per_class == 0 || cfg.attributes_per_class > cfg.n_attributes) bad("attributes_per_class out of range");
  if (n_choose_k(cfg.n_attributes, cfg.attributes_per_class) < double(cfg.n_classes)) {
    bad("not enough attribute subsets for distinct classes");
  }
  if (!(cfg.activity_target_peak > 1.0f / float(cfg.n_classes) && cfg.activity_target_peak <= 1.0f)) {
    bad("activity_target_peak must lie in (1/n_classes, 1]");
  }
  if (!(cfg.identity_signal >= 0.0f) || !(cfg.class_signal >= 0.0f) || !(cfg.noise_sigma >= 0.0f)) {
    bad("signals and noise_sigma must be >= 0");
  }
  if (!(cfg.aur_active_prob >= 0.0f && cfg.aur_active_prob <= 1.0f) ||
      !(cfg.aur_spurious_prob >= 0.0f && cfg.aur_spurious_prob <= 1.0f)) {
    bad("AUR presence probabilities must lie in [0,1]");
  }
}

SynthWorld build_world(const SynthConfig& cfg) {
  validate(cfg);
  SynthWorld w;
  const std::size_t h = cfg.height, wd = cfg.width;
  for (std::size_t i = 0; i < cfg.n_identities; ++i) {
    std::mt19937_64 rng(mix_seed(cfg.seed, 1000 + i));
    w.identity_templates.push_back(blob_field(rng, h, wd, 4));
  }
  for (std::size_t a = 0; a < cfg.n_attributes; ++a) {
    std::mt19937_64 rng(mix_seed(cfg.seed, 2000 + a));
    w.attribute_patterns.push_back(bar_pattern(rng, h, wd));
    if (a < std::size(kAttributePhrases)) {
      w.attribute_phrases.emplace_back(kAttributePhrases[a]);
      w.attribute_names.emplace_back(kAttributeNames[a]);
    } else {
      w.attribute_phrases.push_back("feature " + std::to_string(a) + " active");
      w.attribute_names.push_back("action unit " + std::to_string(a));
    }
  }

  std::mt19937_64 rng(mix_seed(cfg.seed, 3000));
  std::set<std::vector<int>> used;
  std::vector<int> pool(cfg.n_attributes);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
  while (w.class_attributes.size() < cfg.n_classes) {
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<int> subset(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(cfg.attributes_per_class));
    std::sort(subset.begin(), subset.end());
    if (used.insert(subset).second) w.class_attributes.push_back(subset);
  }

  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    w.class_names.push_back(cfg.n_classes <= std::size(kExpressionNames) ? kExpressionNames[c]
                                                                          : "expression " + std::to_string(c));
  }
  for (std::size_t a = 0; a < cfg.n_activities; ++a) {
    const int target = static_cast<int>(a % cfg.n_classes);
    w.activity_target.push_back(target);
    std::vector<std::string> clauses;
    for (int attr : w.class_attributes[target]) clauses.push_back(w.attribute_phrases[attr]);
    const std::string scenario = a < std::size(kScenarios) ? kScenarios[a] : "task number " + std::to_string(a);
    w.activity_texts.push_back(scenario + ": " + w.class_names[target] + " face with " + join_clauses(clauses));
  }
  return w;
}

Dataset generate_synthetic(const SynthConfig& cfg) {
  const SynthWorld world = build_world(cfg);
  Dataset ds;
  ds.height = cfg.height;
  ds.width = cfg.width;
  ds.task = cfg.task;
  ds.n_classes = cfg.task == Task::Fer ? cfg.n_classes : cfg.n_attributes;
  const std::size_t pixels = cfg.height * cfg.width;
  for (std::size_t a = 0; a < cfg.n_activities; ++a) {
    for (std::size_t k = 0; k < cfg.samples_per_activity; ++k) {
      const std::size_t index = a * cfg.samples_per_activity + k;
      std::mt19937_64 rng(mix_seed(cfg.seed, 1'000'000 + index));
      Sample s;
      s.id = "s" + std::to_string(index);
      s.activity = static_cast<int>(a);
      s.activity_text = world.activity_texts[a];
      s.identity = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, cfg.n_identities - 1)(rng));

      int cls = world.activity_target[a];
      if (!std::bernoulli_distribution(cfg.activity_target_peak)(rng)) {
        // Uniform over the remaining classes.
        int other = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, cfg.n_classes - 2)(rng));
        cls = other >= cls ? other + 1 : other;
      }

      std::vector<std::uint8_t> present(cfg.n_attributes, 0);
      for (int attr : world.class_attributes[cls]) present[attr] = 1;
      if (cfg.task == Task::Aur) {
        std::bernoulli_distribution keep(cfg.aur_active_prob), spurious(cfg.aur_spurious_prob);
        for (std::size_t attr = 0; attr < cfg.n_attributes; ++attr) {
          present[attr] = present[attr] ? keep(rng) : spurious(rng);
        }
        s.target_multi = present;
      } else {
        s.target_class = cls;
      }

      std::normal_distribution<float> noise(0.0f, 1.0f);
      const auto& templ = world.identity_templates[s.identity];
      s.image.resize(pixels);
      for (std::size_t p = 0; p < pixels; ++p) {
        float v = 0.5f + cfg.identity_signal * templ[p];
        for (std::size_t attr = 0; attr < cfg.n_attributes; ++attr) {
          if (present[attr]) v += cfg.class_signal * world.attribute_patterns[attr][p];
        }
        if (cfg.noise_sigma > 0.0f) v += cfg.noise_sigma * noise(rng);
        s.image[p] = std::clamp(v, 0.0f, 1.0f);
      }
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

std::vector<text::Label> synthetic_labels(const SynthConfig& cfg) {
  const SynthWorld world = build_world(cfg);
  std::vector<text::Label> labels;
  if (cfg.task == Task::Fer) {
    for (std::size_t c = 0; c < cfg.n_classes; ++c) {
      std::vector<std::string> clauses;
      for (int attr : world.class_attributes[c]) clauses.push_back(world.attribute_phrases[attr]);
      labels.push_back({world.class_names[c], join_clauses(clauses)});
    }
  } else {
    for (std::size_t a = 0; a < cfg.n_attributes; ++a) labels.push_back({world.attribute_names[a], world.attribute_phrases[a]});
  }
  return labels;
}

}  // namespace clef::data
