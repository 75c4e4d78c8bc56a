#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "clef/data/synth.hpp"
#include "clef/error.hpp"
#include "clef/model/encoders.hpp"
#include "clef/train/train.hpp"

namespace clef::cli {

// Everything a subcommand can be configured with. One flat key namespace:
// the TOML file may group keys under [run], [synth], [arch] and [paths] but
// the names are unique across groups, and each is overridable by --key value.
struct Config {
  train::RunConfig run;
  data::SynthConfig synth;
  model::ArchConfig arch;
  double test_fraction = 0.2;
  float degenerate_f1 = 1.0f;
  std::string inference;        // empty: taken from the checkpoint
  std::vector<int> classes;     // FER class subset (fine-tuning or zero-shot)

  std::string data;
  std::string test_data;
  std::string labels;
  std::string unseen_labels;
  std::string init;
  std::string ckpt;
  std::string out;
  std::string report;
  std::string activity_templates;
  std::string description_templates;

  // Keys set by the environment, the file or a flag rather than defaulted.
  std::set<std::string> explicit_keys;

  bool arch_overridden() const;
};

struct KeyInfo {
  std::string name;
  std::string group;
  std::string type;  // int, float, bool, string, list
  std::string help;
};
const std::vector<KeyInfo>& registry();

// Sets one key from its textual form. Unknown keys and malformed values raise
// ConfigError naming the key.
void set_key(Config& cfg, const std::string& key, const std::string& value);
std::string get_key(const Config& cfg, const std::string& key);

// Flags: "--key value" pairs. Dashes in key names are read as underscores.
// Bare switches: --no-names, --no-descriptions, --linear-head, --no-shared-text.
std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& args);

// Precedence, lowest first: defaults, CLEF_SEED, the TOML file, flags.
Config resolve(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& flag_args,
               const char* env_seed);

// Resolved config as TOML; feeding it back through resolve() reproduces `cfg`.
std::string to_toml(const Config& cfg);

// 1 for invalid input or configuration, 2 for runtime failures.
int exit_code(ErrorKind kind);

}  // namespace clef::cli
