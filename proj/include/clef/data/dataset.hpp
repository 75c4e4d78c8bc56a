#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace clef::data {

enum class Task { Fer, Aur };

std::string to_string(Task task);
Task parse_task(const std::string& s);

struct Sample {
  std::string id;
  std::vector<float> image;  // height x width, row-major, values in [0, 1]
  int identity = 0;
  int activity = 0;
  std::string activity_text;
  int target_class = 0;                // FER target
  std::vector<std::uint8_t> target_multi;  // AUR target, length n_classes

  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::size_t height = 16;
  std::size_t width = 16;
  Task task = Task::Fer;
  std::size_t n_classes = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  bool operator==(const Dataset&) const = default;
};

// Throws SchemaError when a sample breaks the dataset invariants.
void validate(const Dataset& ds);

// One JSON object per line:
// {"id", "image": [[f32; W]; H], "identity", "activity", "activity_text", "target": int | [int; C]}
void save_jsonl(const std::filesystem::path& path, const Dataset& ds);

// Order is preserved. The task follows the target type; for FER the class
// count is taken from `n_classes` when given, otherwise max target + 1.
Dataset load_jsonl(const std::filesystem::path& path, std::optional<std::size_t> n_classes = std::nullopt);

// Subject-exclusive split: a seeded shuffle of identities assigns roughly
// `test_fraction` of them to the test set.
struct Split {
  Dataset train;
  Dataset test;
};
Split split_by_identity(const Dataset& ds, double test_fraction, std::uint64_t seed);

// FER samples whose class is listed, relabelled to the position in `classes`.
Dataset select_classes(const Dataset& ds, const std::vector<int>& classes);

}  // namespace clef::data
