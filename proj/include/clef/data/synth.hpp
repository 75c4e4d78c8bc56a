#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "clef/data/dataset.hpp"
#include "clef/text/tokenizer.hpp"

namespace clef::data {

// Latent-factor generator for facial-behaviour-like data: identities render
// a personal template, classes switch on a subset of shared attributes, and
// activities skew the class distribution toward one target class.
struct SynthConfig {
  std::size_t n_identities = 20;
  std::size_t n_activities = 8;
  std::size_t n_classes = 8;
  std::size_t n_attributes = 12;
  std::size_t attributes_per_class = 3;
  std::size_t samples_per_activity = 500;
  float activity_target_peak = 0.8f;
  float identity_signal = 0.3f;
  float class_signal = 0.25f;
  float noise_sigma = 0.08f;
  std::size_t height = 16;
  std::size_t width = 16;
  Task task = Task::Fer;
  // AUR mode: presence probability of a class attribute and of any other attribute.
  float aur_active_prob = 0.9f;
  float aur_spurious_prob = 0.05f;
  std::uint64_t seed = 0;
};

// Throws ConfigError when an invariant does not hold.
void validate(const SynthConfig& cfg);

// The fixed factors behind a generated dataset.
struct SynthWorld {
  std::vector<std::vector<float>> identity_templates;   // [identity][pixel], in [-1, 1]
  std::vector<std::vector<float>> attribute_patterns;   // [attribute][pixel], in [-1, 1]
  std::vector<std::vector<int>> class_attributes;       // [class] -> sorted attribute ids
  std::vector<int> activity_target;                     // [activity] -> class
  std::vector<std::string> attribute_phrases;           // clause per attribute
  std::vector<std::string> attribute_names;             // AU-style short name per attribute
  std::vector<std::string> class_names;
  std::vector<std::string> activity_texts;
};

SynthWorld build_world(const SynthConfig& cfg);

Dataset generate_synthetic(const SynthConfig& cfg);

// Label names and descriptions for the configured task: expression classes
// for FER, attributes for AUR. Descriptions compose the attribute clauses.
std::vector<text::Label> synthetic_labels(const SynthConfig& cfg);

// SplitMix64 finalizer; used to derive per-sample random substreams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace clef::data
