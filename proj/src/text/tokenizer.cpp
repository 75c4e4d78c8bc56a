#include "clef/text/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "clef/error.hpp"
#include "clef/text/prompts.hpp"
#include "json.hpp"

namespace clef::text {

std::uint64_t stable_hash(std::string_view word) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : word) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::int32_t word_id(std::string_view word, std::size_t vocab) {
  return static_cast<std::int32_t>(stable_hash(word) % (vocab - kReservedIds) + kReservedIds);
}

TokenizedText tokenize(std::string_view text, std::size_t context_len, std::size_t vocab) {
  if (context_len < 3) fail(ErrorKind::ConfigError, "context length must be at least 3");
  if (vocab <= kReservedIds) fail(ErrorKind::ConfigError, "vocabulary must exceed the reserved ids");
  const auto words = split_words(text);
  const std::size_t kept = std::min(words.size(), context_len - 2);
  TokenizedText out;
  out.ids.assign(context_len, kPadId);
  out.ids[0] = kBosId;
  for (std::size_t i = 0; i < kept; ++i) out.ids[i + 1] = word_id(words[i], vocab);
  out.ids[kept + 1] = kEosId;
  out.true_len = kept + 2;
  out.end_index = kept + 1;
  return out;
}

CollisionReport measure_collisions(std::span<const std::string> payloads, std::size_t context_len,
                                   std::size_t vocab) {
  CollisionReport report;
  std::map<std::string, std::int32_t> words;
  for (const auto& p : payloads)
    for (auto& w : split_words(p)) words.emplace(w, word_id(w, vocab));
  std::map<std::int32_t, std::size_t> per_id;
  for (const auto& [w, id] : words) ++per_id[id];
  report.distinct_words = words.size();
  for (const auto& [w, id] : words)
    if (per_id[id] > 1) ++report.colliding_words;

  const TemplateSet names{TemplateKind::LabelName, {std::string(kLabelNameTemplate)}};
  std::vector<std::string> distinct;
  for (const auto& p : payloads) {
    const std::string lower = to_lower(p);
    if (std::find(distinct.begin(), distinct.end(), lower) == distinct.end()) distinct.push_back(lower);
  }
  std::vector<TokenizedText> tokens;
  for (const auto& p : distinct) tokens.push_back(tokenize(render_prompt(names, 0, p), context_len, vocab));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (std::size_t j = i + 1; j < tokens.size(); ++j) {
      ++report.payload_pairs;
      if (tokens[i] == tokens[j]) ++report.colliding_pairs;
    }
  }
  return report;
}

std::vector<Label> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open label file " + path.string());
  std::vector<Label> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorKind::ParseError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    for (const char* field : {"name", "description"}) {
      if (!j.is_object() || !j.contains(field) || !j[field].is_string() || j[field].get<std::string>().empty()) {
        fail(ErrorKind::SchemaError, path.string() + ":" + std::to_string(line_no) + ": field " + field);
      }
    }
    labels.push_back({j["name"].get<std::string>(), j["description"].get<std::string>()});
  }
  return labels;
}

void save_labels(const std::filesystem::path& path, std::span<const Label> labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  for (const auto& l : labels) out << nlohmann::json{{"name", l.name}, {"description", l.description}}.dump() << '\n';
}

}  // namespace clef::text
