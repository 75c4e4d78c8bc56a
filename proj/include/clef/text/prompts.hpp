#pragma once

#include <cstddef>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace clef::text {

enum class TemplateKind { LabelName, AuDescription, FeDescription, ActivityDescription };

std::string_view to_string(TemplateKind kind);

// Ordered prompt templates, each holding exactly one "{}" placeholder.
struct TemplateSet {
  TemplateKind kind = TemplateKind::LabelName;
  std::vector<std::string> templates;

  std::size_t size() const { return templates.size(); }
};

inline constexpr std::string_view kLabelNameTemplate = "a photo of a person with {}.";

// Validates placeholder counts and, for label names, the single fixed template.
TemplateSet make_template_set(TemplateKind kind, std::vector<std::string> templates);

// One template per line; blank lines are skipped.
TemplateSet load_templates(const std::filesystem::path& path, TemplateKind kind);

// Directory of bundled data files. CLEF_DATA_DIR in the environment wins over
// the build-time location.
std::filesystem::path data_dir();

// Template lists shipped under data/templates.
TemplateSet bundled_templates(TemplateKind kind);

// Replaces the placeholder with the lowercased payload.
std::string render_prompt(const TemplateSet& set, std::size_t index, std::string_view payload);

// Uniform template index.
std::size_t sample_template(const TemplateSet& set, std::mt19937_64& rng);

std::string to_lower(std::string_view s);

}  // namespace clef::text
