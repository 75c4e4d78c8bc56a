#include "clef/text/prompts.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>

#include "clef/error.hpp"

namespace clef::text {
namespace {

std::size_t count_placeholders(std::string_view s) {
  std::size_t n = 0;
  for (std::size_t pos = s.find("{}"); pos != std::string_view::npos; pos = s.find("{}", pos + 2)) ++n;
  return n;
}

std::string_view file_stem(TemplateKind kind) {
  switch (kind) {
    case TemplateKind::LabelName: return "label_name";
    case TemplateKind::AuDescription: return "au_description";
    case TemplateKind::FeDescription: return "fe_description";
    case TemplateKind::ActivityDescription: return "activity_description";
  }
  return "";
}

}  // namespace

std::string_view to_string(TemplateKind kind) { return file_stem(kind); }

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

TemplateSet make_template_set(TemplateKind kind, std::vector<std::string> templates) {
  for (const auto& t : templates) {
    if (count_placeholders(t) != 1) {
      fail(ErrorKind::SchemaError, "template must contain exactly one {} placeholder: \"" + t + "\"");
    }
  }
  if (kind == TemplateKind::LabelName && (templates.size() != 1 || templates[0] != kLabelNameTemplate)) {
    fail(ErrorKind::SchemaError, "label-name prompting uses the single template \"" +
                                     std::string(kLabelNameTemplate) + "\"");
  }
  return TemplateSet{kind, std::move(templates)};
}

TemplateSet load_templates(const std::filesystem::path& path, TemplateKind kind) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open template file " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(line);
  }
  return make_template_set(kind, std::move(lines));
}

std::filesystem::path data_dir() {
  if (const char* env = std::getenv("CLEF_DATA_DIR"); env && *env) return env;
#ifdef CLEF_DATA_DIR
  return CLEF_DATA_DIR;
#else
  return "data";
#endif
}

TemplateSet bundled_templates(TemplateKind kind) {
  return load_templates(data_dir() / "templates" / (std::string(file_stem(kind)) + ".txt"), kind);
}

std::string render_prompt(const TemplateSet& set, std::size_t index, std::string_view payload) {
  if (index >= set.templates.size()) {
    fail(ErrorKind::IndexOutOfRange,
         "template " + std::to_string(index) + " of " + std::to_string(set.templates.size()));
  }
  if (payload.empty()) fail(ErrorKind::EmptyInput, "prompt payload is empty");
  const std::string& t = set.templates[index];
  const std::size_t pos = t.find("{}");
  return t.substr(0, pos) + to_lower(payload) + t.substr(pos + 2);
}

std::size_t sample_template(const TemplateSet& set, std::mt19937_64& rng) {
  if (set.templates.empty()) fail(ErrorKind::EmptySet, "no templates to sample");
  std::uniform_int_distribution<std::size_t> dist(0, set.templates.size() - 1);
  return dist(rng);
}

}  // namespace clef::text
