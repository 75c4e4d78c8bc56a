#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace clef::text {

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kBosId = 1;
inline constexpr std::int32_t kEosId = 2;
inline constexpr std::size_t kReservedIds = 3;

// Toy defaults; the full-scale text encoder uses a 49408 vocabulary and a
// context of 77 tokens.
inline constexpr std::size_t kDefaultVocab = 1024;
inline constexpr std::size_t kDefaultContext = 32;

struct TokenizedText {
  std::vector<std::int32_t> ids;  // length == context_len
  std::size_t true_len = 0;       // BOS .. EOS inclusive
  std::size_t end_index = 0;      // position of EOS

  bool operator==(const TokenizedText&) const = default;
};

// FNV-1a 64-bit; stable across platforms and runs.
std::uint64_t stable_hash(std::string_view word);

// Lowercased words split on anything that is not a letter or digit.
std::vector<std::string> split_words(std::string_view text);

std::int32_t word_id(std::string_view word, std::size_t vocab = kDefaultVocab);

// BOS + word ids + EOS, truncated (EOS kept) or padded to context_len.
TokenizedText tokenize(std::string_view text, std::size_t context_len = kDefaultContext,
                       std::size_t vocab = kDefaultVocab);

struct CollisionReport {
  std::size_t distinct_words = 0;
  std::size_t colliding_words = 0;  // words sharing an id with another word
  std::size_t payload_pairs = 0;
  std::size_t colliding_pairs = 0;  // distinct payloads with identical token sequences

  double word_rate() const { return distinct_words ? double(colliding_words) / double(distinct_words) : 0.0; }
  double pair_rate() const { return payload_pairs ? double(colliding_pairs) / double(payload_pairs) : 0.0; }
};

// Measures hashing collisions among the payloads rendered through the
// label-name template.
CollisionReport measure_collisions(std::span<const std::string> payloads, std::size_t context_len = kDefaultContext,
                                   std::size_t vocab = kDefaultVocab);

// A class label: short name plus free-text description.
struct Label {
  std::string name;
  std::string description;

  bool operator==(const Label&) const = default;
};

// JSONL, one {"name": ..., "description": ...} per line; line order is class order.
std::vector<Label> load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, std::span<const Label> labels);

}  // namespace clef::text
