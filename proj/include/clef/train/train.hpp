#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "clef/data/dataset.hpp"
#include "clef/model/encoders.hpp"
#include "clef/text/prompts.hpp"
#include "clef/text/tokenizer.hpp"
#include "clef/train/checkpoint.hpp"
#include "clef/train/optim.hpp"

namespace clef::train {

enum class Stage { Pretrain, Finetune };
std::string to_string(Stage s);
Stage parse_stage(const std::string& s);

struct RunConfig {
  Stage stage = Stage::Pretrain;
  data::Task task = data::Task::Fer;
  float lambda = 2.0f;
  std::size_t batch_size = 64;
  std::size_t epochs = 5;
  std::size_t warmup_epochs = 1;
  float lr = 2e-4f;
  float min_lr = 1e-6f;
  AdamWConfig adam;
  std::uint64_t seed = 0;

  // Pre-training toggles.
  bool use_activity_text = true;       // PA
  bool self_view_positives = false;    // SSL baseline: only an image's own second view is positive
  bool symmetric_anchors = false;
  bool augment = true;

  // Fine-tuning toggles.
  bool use_pretrained_image = true;    // PI: honour an init checkpoint
  bool use_names = true;               // N
  bool use_descriptions = true;        // D
  bool linear_head = false;            // forced when neither N nor D is used
  bool finetune_augment = true;
  bool class_weighting = true;
};

void validate(const RunConfig& cfg);

// What the fine-tuned model predicts against.
enum class InferenceMode { Names, Descriptions, Head };
std::string to_string(InferenceMode m);
InferenceMode parse_inference_mode(const std::string& s);
InferenceMode inference_mode(const RunConfig& cfg);
bool uses_linear_head(const RunConfig& cfg);

struct LossRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  float lr = 0.0f;
  float loss = 0.0f;
  float part_a = 0.0f;  // loss_ii (pre-train) or loss_in (fine-tune)
  float part_b = 0.0f;  // loss_ia (pre-train) or loss_dn (fine-tune)
};

struct TrainResult {
  model::ModelParams params;
  OptimState optim;
  std::vector<LossRow> log;
  Checkpoint checkpoint;
};

// Prompt sources. Activity texts come from each sample.
struct PromptSet {
  text::TemplateSet activity;
  text::TemplateSet description;
  static PromptSet bundled(data::Task task);
};

// The arch's head_classes and text-sharing fields are taken from cfg where
// they apply.
TrainResult pretrain(const RunConfig& cfg, const model::ArchConfig& arch, const data::Dataset& ds,
                     const PromptSet& prompts);

TrainResult finetune(const RunConfig& cfg, const model::ArchConfig& arch, const data::Dataset& ds,
                     const std::vector<text::Label>& labels, const PromptSet& prompts,
                     const Checkpoint* init = nullptr);

std::string loss_csv(Stage stage, const std::vector<LossRow>& log);
void write_loss_csv(const std::filesystem::path& path, Stage stage, const std::vector<LossRow>& log);

}  // namespace clef::train
