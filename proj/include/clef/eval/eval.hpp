#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "clef/data/dataset.hpp"
#include "clef/model/encoders.hpp"
#include "clef/numerics/tensor.hpp"
#include "clef/text/prompts.hpp"
#include "clef/text/tokenizer.hpp"
#include "json.hpp"

namespace clef::eval {

// Argmax of zI . zT per row; ties go to the lowest class index.
std::vector<int> predict_fer(const num::Tensor& zI, const num::Tensor& zT);

// Bit c is set iff sigmoid(zI . zT_c / tau) >= threshold. Result is B x C row-major.
std::vector<std::uint8_t> predict_au(const num::Tensor& zI, const num::Tensor& zT, float tau, float threshold = 0.5f);

struct F1Result {
  std::vector<float> per_class;
  float macro = 0.0f;
  std::vector<std::size_t> tp, fp, fn;
};

// 2TP / (2TP + FP + FN) per class. Classes without any true or predicted
// positive score `degenerate_value` (1 by default).
F1Result f1_scores(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth, std::size_t n_classes,
                   float degenerate_value = 1.0f);

float accuracy(std::span<const int> pred, std::span<const int> truth);

struct EvalReport {
  data::Task task = data::Task::Fer;
  std::vector<std::string> class_names;
  std::vector<float> per_class_f1;
  float macro_f1 = 0.0f;
  float accuracy = 0.0f;
  // FER: C x C counts indexed [true][pred]. AUR: per class {tp, fp, fn, tn}.
  std::vector<std::vector<std::size_t>> confusion;
  std::size_t n_samples = 0;
  std::string fingerprint;

  nlohmann::json to_json() const;
  std::string f1_csv() const;
};

// Unit embeddings of every dataset image, computed in chunks without
// keeping gradients.
num::Tensor embed_images(model::ModelParams& params, const data::Dataset& ds);
// Pooled (pre-projection) features, for the linear head.
num::Tensor pooled_features(model::ModelParams& params, const data::Dataset& ds);
num::Tensor embed_prompts(model::ModelParams& params, const std::vector<std::string>& prompts,
                          const std::string& tower = model::kTextTower);

std::vector<std::string> name_prompts(const std::vector<text::Label>& labels);
// Descriptions rendered with template 0.
std::vector<std::string> description_prompts(const std::vector<text::Label>& labels, const text::TemplateSet& set);

// Scores predictions against dataset targets.
EvalReport report_from_predictions(const data::Dataset& ds, std::span<const int> fer_pred,
                                   std::span<const std::uint8_t> au_pred, const std::vector<std::string>& class_names,
                                   float degenerate_f1 = 1.0f);

// inference: "names", "descriptions" or "head".
EvalReport evaluate(model::ModelParams& params, const std::string& inference, const data::Dataset& ds,
                    const std::vector<text::Label>& labels, const text::TemplateSet& description_set,
                    float degenerate_f1 = 1.0f);

// Description-based classification of classes never seen in fine-tuning.
// Throws ClassOverlap when an unseen label name is among the seen ones.
EvalReport zero_shot_eval(model::ModelParams& params, const data::Dataset& unseen,
                          const std::vector<text::Label>& unseen_labels, const std::vector<std::string>& seen_names,
                          const text::TemplateSet& description_set);

struct ProbeOptions {
  std::size_t k_folds = 3;
  std::size_t steps = 500;
  float lr = 0.1f;
  std::uint64_t seed = 0;
};

// Mean held-out accuracy of a multinomial logistic regression trained by
// full-batch gradient descent on standardized features.
float linear_probe(const num::Tensor& embeddings, std::span<const int> labels, const ProbeOptions& opts = {});

}  // namespace clef::eval
