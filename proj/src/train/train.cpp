#include "clef/train/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>

#include "clef/data/batching.hpp"
#include "clef/data/synth.hpp"
#include "clef/error.hpp"
#include "clef/losses/losses.hpp"
#include "clef/numerics/ops.hpp"

namespace clef::train {

using num::Var;

std::string to_string(Stage s) { return s == Stage::Pretrain ? "pretrain" : "finetune"; }

Stage parse_stage(const std::string& s) {
  if (s == "pretrain") return Stage::Pretrain;
  if (s == "finetune") return Stage::Finetune;
  fail(ErrorKind::ConfigError, "stage must be pretrain or finetune, got '" + s + "'");
}

std::string to_string(InferenceMode m) {
  switch (m) {
    case InferenceMode::Names: return "names";
    case InferenceMode::Descriptions: return "descriptions";
    case InferenceMode::Head: return "head";
  }
  return "names";
}

InferenceMode parse_inference_mode(const std::string& s) {
  if (s == "names") return InferenceMode::Names;
  if (s == "descriptions") return InferenceMode::Descriptions;
  if (s == "head") return InferenceMode::Head;
  fail(ErrorKind::FormatError, "unknown inference mode '" + s + "'");
}

bool uses_linear_head(const RunConfig& cfg) { return cfg.linear_head || (!cfg.use_names && !cfg.use_descriptions); }

InferenceMode inference_mode(const RunConfig& cfg) {
  if (uses_linear_head(cfg)) return InferenceMode::Head;
  return cfg.use_names ? InferenceMode::Names : InferenceMode::Descriptions;
}

void validate(const RunConfig& cfg) {
  if (!(cfg.lambda > 0.0f)) fail(ErrorKind::ConfigError, "lambda must be > 0");
  if (cfg.batch_size < 2) fail(ErrorKind::ConfigError, "batch_size must be >= 2 for contrastive stages");
  if (cfg.epochs == 0) fail(ErrorKind::ConfigError, "epochs must be positive");
  if (cfg.warmup_epochs > cfg.epochs) fail(ErrorKind::ConfigError, "warmup_epochs exceeds epochs");
  if (!(cfg.lr > 0.0f) || !(cfg.min_lr >= 0.0f) || cfg.min_lr > cfg.lr) {
    fail(ErrorKind::ConfigError, "need lr > 0 and 0 <= min_lr <= lr");
  }
  if (!(cfg.adam.beta1 >= 0.0f && cfg.adam.beta1 < 1.0f) || !(cfg.adam.beta2 >= 0.0f && cfg.adam.beta2 < 1.0f)) {
    fail(ErrorKind::ConfigError, "adam betas must lie in [0,1)");
  }
  if (!(cfg.adam.weight_decay >= 0.0f) || !(cfg.adam.eps > 0.0f)) fail(ErrorKind::ConfigError, "bad adam settings");
}

PromptSet PromptSet::bundled(data::Task task) {
  return {text::bundled_templates(text::TemplateKind::ActivityDescription),
          text::bundled_templates(task == data::Task::Fer ? text::TemplateKind::FeDescription
                                                          : text::TemplateKind::AuDescription)};
}

namespace {

// Encodes each distinct prompt once and gathers rows back per request.
Var encode_prompts(model::Binder& b, const std::vector<std::string>& prompts, const std::string& tower) {
  std::map<std::string, std::size_t> slot;
  std::vector<text::TokenizedText> unique;
  std::vector<std::size_t> rows;
  const auto& arch = b.params().arch;
  for (const auto& p : prompts) {
    auto [it, inserted] = slot.emplace(p, unique.size());
    if (inserted) unique.push_back(text::tokenize(p, arch.context, arch.vocab));
    rows.push_back(it->second);
  }
  Var z = model::encode_text(b, unique, tower);
  if (unique.size() == prompts.size()) {
    bool ordered = true;
    for (std::size_t i = 0; i < rows.size(); ++i) ordered = ordered && rows[i] == i;
    if (ordered) return z;
  }
  return num::gather_rows(z, rows);
}

struct Loop {
  Schedule schedule;
  std::size_t batches_per_epoch = 0;
};

Loop make_loop(const RunConfig& cfg, std::size_t n_samples) {
  const std::size_t per_epoch = n_samples / cfg.batch_size;
  if (per_epoch == 0) {
    fail(ErrorKind::BatchTooSmall, std::to_string(n_samples) + " samples cannot fill a batch of " +
                                       std::to_string(cfg.batch_size));
  }
  Loop loop;
  loop.batches_per_epoch = per_epoch;
  loop.schedule = {cfg.lr, cfg.min_lr, cfg.warmup_epochs * per_epoch, cfg.epochs * per_epoch};
  return loop;
}

nlohmann::json run_meta(const RunConfig& cfg, std::size_t step) {
  return {{"stage", to_string(cfg.stage)}, {"task", data::to_string(cfg.task)}, {"seed", cfg.seed}, {"step", step}};
}

void step_optimizer(model::ModelParams& params, OptimState& optim, float lr, const AdamWConfig& adam) {
  auto ptrs = params.pointers();
  adamw_step(ptrs, optim, lr, adam);
  // Keep the learnable logit scales inside their clamp.
  const float cap = std::log(params.arch.max_logit_scale);
  for (const char* name : {"log_logit_scale", "pretrain.t1", "pretrain.t2"}) {
    if (params.contains(name)) {
      float& v = params.at(name).values[0];
      v = std::min(v, cap);
    }
  }
  params.zero_grad();
}

}  // namespace

TrainResult pretrain(const RunConfig& cfg, const model::ArchConfig& arch_in, const data::Dataset& ds,
                     const PromptSet& prompts) {
  validate(cfg);
  data::validate(ds);
  if (ds.empty()) fail(ErrorKind::EmptyDataset, "pre-training needs samples");
  model::ArchConfig arch = arch_in;
  arch.head_classes = 0;
  arch.share_text_encoder = true;
  if (ds.height != arch.image_height || ds.width != arch.image_width) {
    fail(ErrorKind::ShapeMismatch, "dataset images do not match the image encoder");
  }

  TrainResult res;
  res.params = model::init_params(arch, cfg.seed);
  const Loop loop = make_loop(cfg, ds.size());
  std::mt19937_64 template_rng(data::mix_seed(cfg.seed, 0x7e4a));

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = data::make_batches(
        ds, {.batch_size = cfg.batch_size,
             .shuffle_seed = data::mix_seed(cfg.seed, epoch),
             .two_views = true,
             .policy = cfg.augment ? data::pretrain_policy() : data::AugmentPolicy{}});
    for (const auto& batch : batches) {
      ++step;
      const float lr = lr_at(step, loop.schedule);
      num::Graph g;
      model::Binder b(g, res.params);
      const num::Tensor* views[] = {&batch.view1, &batch.view2};
      const std::size_t n = batch.size(), pixels = ds.height * ds.width;
      num::Tensor both = num::Tensor::matrix(2 * n, pixels);
      for (int v = 0; v < 2; ++v)
        std::copy(views[v]->values.begin(), views[v]->values.end(), both.values.begin() + std::ptrdiff_t(v * n * pixels));
      Var z = model::encode_image(b, both).embedding;
      std::vector<std::size_t> first(n), second(n);
      for (std::size_t i = 0; i < n; ++i) {
        first[i] = i;
        second[i] = n + i;
      }
      Var z1 = num::gather_rows(z, first), z2 = num::gather_rows(z, second);

      std::vector<int> labels = batch.activities;
      if (cfg.self_view_positives)
        for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i);

      LossRow row{step, epoch, lr, 0.0f, 0.0f, 0.0f};
      Var loss;
      if (cfg.use_activity_text) {
        std::vector<std::string> texts;
        for (std::size_t idx : batch.indices) {
          const std::size_t t = text::sample_template(prompts.activity, template_rng);
          texts.push_back(text::render_prompt(prompts.activity, t, ds.samples[idx].activity_text));
        }
        Var za = encode_prompts(b, texts, model::kTextTower);
        auto terms = losses::pretrain_loss(z1, z2, za, labels, model::pretrain_scale(b, 1), model::pretrain_scale(b, 2),
                                           cfg.symmetric_anchors);
        loss = terms.total;
        row.part_a = terms.ii.item();
        row.part_b = terms.ia.item();
      } else {
        loss = losses::image_image_loss(z1, z2, labels, model::pretrain_scale(b, 1), cfg.symmetric_anchors);
        row.part_a = loss.item();
      }
      row.loss = loss.item();
      if (!std::isfinite(row.loss)) fail(ErrorKind::NonFinite, "pre-training loss at step " + std::to_string(step));
      g.backward(loss);
      step_optimizer(res.params, res.optim, lr, cfg.adam);
      res.log.push_back(row);
    }
  }
  res.checkpoint = make_checkpoint(res.params, &res.optim, run_meta(cfg, step));
  return res;
}

TrainResult finetune(const RunConfig& cfg, const model::ArchConfig& arch_in, const data::Dataset& ds,
                     const std::vector<text::Label>& labels, const PromptSet& prompts, const Checkpoint* init) {
  validate(cfg);
  data::validate(ds);
  if (ds.empty()) fail(ErrorKind::EmptyDataset, "fine-tuning needs samples");
  if (ds.task != cfg.task) fail(ErrorKind::ConfigError, "dataset task differs from the configured task");
  const std::size_t C = ds.n_classes;
  const bool head = uses_linear_head(cfg);
  if (!head && labels.size() != C) {
    fail(ErrorKind::SizeMismatch, std::to_string(labels.size()) + " labels for " + std::to_string(C) + " classes");
  }
  model::ArchConfig arch = arch_in;
  arch.head_classes = head ? C : 0;
  if (ds.height != arch.image_height || ds.width != arch.image_width) {
    fail(ErrorKind::ShapeMismatch, "dataset images do not match the image encoder");
  }

  TrainResult res;
  res.params = model::init_params(arch, cfg.seed);
  if (init && cfg.use_pretrained_image) restore_params(*init, res.params);

  const std::vector<float> weights = cfg.class_weighting ? losses::class_weights(ds) : std::vector<float>(C, 1.0f);
  std::vector<std::string> name_prompts;
  text::TemplateSet name_set = text::make_template_set(text::TemplateKind::LabelName, {std::string(text::kLabelNameTemplate)});
  for (const auto& l : labels) name_prompts.push_back(text::render_prompt(name_set, 0, l.name));

  const Loop loop = make_loop(cfg, ds.size());
  std::mt19937_64 template_rng(data::mix_seed(cfg.seed, 0xd35c));
  const std::string desc_tower = model::description_tower(arch);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = data::make_batches(
        ds, {.batch_size = cfg.batch_size,
             .shuffle_seed = data::mix_seed(cfg.seed, epoch),
             .policy = cfg.finetune_augment ? data::finetune_policy() : data::AugmentPolicy{}});
    for (const auto& batch : batches) {
      ++step;
      const float lr = lr_at(step, loop.schedule);
      num::Graph g;
      model::Binder b(g, res.params);
      const model::ImageOutput img = model::encode_image(b, batch.view1);
      std::vector<int> fer_targets;
      std::vector<std::uint8_t> au_targets;
      for (std::size_t idx : batch.indices) {
        const auto& s = ds.samples[idx];
        if (cfg.task == data::Task::Fer) {
          fer_targets.push_back(s.target_class);
        } else {
          au_targets.insert(au_targets.end(), s.target_multi.begin(), s.target_multi.end());
        }
      }
      auto image_loss = [&](Var logits_or_text, bool is_logits) {
        if (is_logits) {
          return cfg.task == data::Task::Fer ? losses::weighted_cross_entropy(logits_or_text, fer_targets, weights)
                                             : losses::weighted_bce(logits_or_text, au_targets, weights);
        }
        Var scale = model::logit_scale(b);
        return cfg.task == data::Task::Fer
                   ? losses::fer_image_name_loss(img.embedding, logits_or_text, fer_targets, weights, scale)
                   : losses::au_image_name_loss(img.embedding, logits_or_text, au_targets, weights, scale);
      };

      LossRow row{step, epoch, lr, 0.0f, 0.0f, 0.0f};
      Var loss;
      if (head) {
        loss = image_loss(model::head_logits(b, img.pooled), true);
        row.part_a = loss.item();
      } else {
        std::optional<Var> zn, zd;
        if (cfg.use_names) zn = encode_prompts(b, name_prompts, model::kTextTower);
        if (cfg.use_descriptions) {
          std::vector<std::string> desc;
          for (const auto& l : labels) {
            desc.push_back(text::render_prompt(prompts.description, text::sample_template(prompts.description, template_rng),
                                               l.description));
          }
          zd = encode_prompts(b, desc, desc_tower);
        }
        if (zn && zd) {
          Var in = image_loss(*zn, false);
          Var dn = losses::name_description_loss(*zd, *zn, model::logit_scale(b));
          loss = losses::finetune_loss(in, dn, cfg.lambda);
          row.part_a = in.item();
          row.part_b = dn.item();
        } else {
          loss = image_loss(zn ? *zn : *zd, false);
          row.part_a = loss.item();
        }
      }
      row.loss = loss.item();
      if (!std::isfinite(row.loss)) fail(ErrorKind::NonFinite, "fine-tuning loss at step " + std::to_string(step));
      g.backward(loss);
      step_optimizer(res.params, res.optim, lr, cfg.adam);
      res.log.push_back(row);
    }
  }
  nlohmann::json meta = run_meta(cfg, step);
  meta["inference"] = to_string(inference_mode(cfg));
  meta["n_classes"] = C;
  std::vector<std::string> class_names;
  for (const auto& l : labels) class_names.push_back(l.name);
  meta["class_names"] = class_names;
  res.checkpoint = make_checkpoint(res.params, &res.optim, std::move(meta));
  return res;
}

std::string loss_csv(Stage stage, const std::vector<LossRow>& log) {
  std::string out = stage == Stage::Pretrain ? "step,epoch,lr,loss,loss_ii,loss_ia\n" : "step,epoch,lr,loss,loss_in,loss_dn\n";
  char buf[160];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%.9g,%.9g,%.9g\n", r.step, r.epoch, double(r.lr), double(r.loss),
                  double(r.part_a), double(r.part_b));
    out += buf;
  }
  return out;
}

void write_loss_csv(const std::filesystem::path& path, Stage stage, const std::vector<LossRow>& log) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::IoError, "cannot write " + path.string());
  f << loss_csv(stage, log);
}

}  // namespace clef::train
