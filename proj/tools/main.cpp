#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "clef/checks/grad_suite.hpp"
#include "clef/data/synth.hpp"
#include "clef/eval/eval.hpp"
#include "clef/train/checkpoint.hpp"
#include "clef/train/train.hpp"
#include "config.hpp"

namespace fs = std::filesystem;
using namespace clef;
using cli::Config;

namespace {

const std::string& require(const std::string& value, const char* key) {
  if (value.empty()) fail(ErrorKind::ConfigError, std::string("key '") + key + "' is required");
  return value;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::IoError, "cannot write " + path.string());
  f << text;
}

fs::path sibling(const fs::path& file, const std::string& suffix) {
  return file.parent_path() / (file.stem().string() + suffix);
}

std::vector<text::Label> pick(const std::vector<text::Label>& all, const std::vector<int>& classes) {
  if (classes.empty()) return all;
  std::vector<text::Label> out;
  for (int c : classes) {
    if (c < 0 || std::size_t(c) >= all.size()) {
      fail(ErrorKind::ConfigError, "key 'classes': class " + std::to_string(c) + " has no label");
    }
    out.push_back(all[std::size_t(c)]);
  }
  return out;
}

// Labels for every class of the dataset, before any class selection.
std::vector<text::Label> all_labels(const Config& cfg, const std::string& path) {
  return path.empty() ? data::synthetic_labels(cfg.synth) : text::load_labels(path);
}

data::Dataset load_data(const Config& cfg, const std::string& path, std::size_t n_classes) {
  data::Dataset ds = data::load_jsonl(path, cfg.run.task == data::Task::Fer ? std::optional(n_classes) : std::nullopt);
  if (ds.task != cfg.run.task) {
    fail(ErrorKind::ConfigError, "key 'task': configured " + data::to_string(cfg.run.task) + " but " + path + " holds " +
                                     data::to_string(ds.task) + " targets");
  }
  return ds;
}

train::PromptSet prompts(const Config& cfg) {
  train::PromptSet p = train::PromptSet::bundled(cfg.run.task);
  if (!cfg.activity_templates.empty()) {
    p.activity = text::load_templates(cfg.activity_templates, text::TemplateKind::ActivityDescription);
  }
  if (!cfg.description_templates.empty()) {
    p.description = text::load_templates(cfg.description_templates, cfg.run.task == data::Task::Fer
                                                                         ? text::TemplateKind::FeDescription
                                                                         : text::TemplateKind::AuDescription);
  }
  return p;
}

fs::path run_dir(const Config& cfg) {
  const fs::path dir = require(cfg.out, "out");
  fs::create_directories(dir);
  return dir;
}

void save_run(const fs::path& dir, const Config& cfg, const train::TrainResult& r, train::Stage stage) {
  write_text(dir / "config.toml", cli::to_toml(cfg));
  train::write_loss_csv(dir / "loss.csv", stage, r.log);
  train::save_checkpoint(dir / "checkpoint.clef", r.checkpoint);
}

int gen_data(const Config& cfg) {
  const fs::path out = require(cfg.out, "out");
  const data::Dataset ds = data::generate_synthetic(cfg.synth);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  data::save_jsonl(out, ds);
  const auto split = data::split_by_identity(ds, cfg.test_fraction, cfg.synth.seed);
  data::save_jsonl(sibling(out, ".train.jsonl"), split.train);
  data::save_jsonl(sibling(out, ".test.jsonl"), split.test);
  const auto labels = data::synthetic_labels(cfg.synth);
  text::save_labels(sibling(out, ".labels.jsonl"), labels);
  write_text(sibling(out, ".config.toml"), cli::to_toml(cfg));
  std::printf("wrote %zu samples to %s (train %zu, test %zu)\n", ds.size(), out.c_str(), split.train.size(),
              split.test.size());
  return 0;
}

int pretrain(Config cfg) {
  cfg.run.stage = train::Stage::Pretrain;
  const fs::path dir = run_dir(cfg);
  const data::Dataset ds = load_data(cfg, require(cfg.data, "data"), cfg.synth.n_classes);
  const auto r = train::pretrain(cfg.run, cfg.arch, ds, prompts(cfg));
  save_run(dir, cfg, r, train::Stage::Pretrain);
  std::printf("pretrain: %zu steps, final loss %.6f -> %s\n", r.log.size(), double(r.log.back().loss),
              (dir / "checkpoint.clef").c_str());
  return 0;
}

struct Finetuned {
  train::TrainResult result;
  std::vector<text::Label> labels;
};

Finetuned run_finetune(const Config& cfg, const data::Dataset& full, const std::vector<text::Label>& labels) {
  data::Dataset ds = cfg.classes.empty() ? full : data::select_classes(full, cfg.classes);
  std::optional<train::Checkpoint> init;
  if (!cfg.init.empty()) init = train::load_checkpoint(cfg.init);
  auto r = train::finetune(cfg.run, cfg.arch, ds, labels, prompts(cfg), init ? &*init : nullptr);
  return {std::move(r), labels};
}

int finetune(Config cfg) {
  cfg.run.stage = train::Stage::Finetune;
  const fs::path dir = run_dir(cfg);
  const auto every = all_labels(cfg, cfg.labels);
  const data::Dataset ds = load_data(cfg, require(cfg.data, "data"), every.size());
  const Finetuned f = run_finetune(cfg, ds, pick(every, cfg.classes));
  save_run(dir, cfg, f.result, train::Stage::Finetune);
  std::printf("finetune: %zu steps, final loss %.6f -> %s\n", f.result.log.size(), double(f.result.log.back().loss),
              (dir / "checkpoint.clef").c_str());
  return 0;
}

model::ModelParams load_params(const Config& cfg, const train::Checkpoint& ckpt) {
  if (!cfg.arch_overridden()) return train::params_from_checkpoint(ckpt);
  model::ArchConfig arch = cfg.arch;
  const model::ArchConfig saved = train::arch_from_json(ckpt.meta.at("arch"));
  arch.head_classes = saved.head_classes;
  arch.share_text_encoder = saved.share_text_encoder;
  model::ModelParams p = model::init_params(arch, 0);
  train::restore_params(ckpt, p);
  return p;
}

void write_report(const Config& cfg, const eval::EvalReport& r, const char* what) {
  const fs::path path = cfg.report.empty() ? (cfg.out.empty() ? fs::path("report.json") : fs::path(cfg.out) / "report.json")
                                           : fs::path(cfg.report);
  write_text(path, r.to_json().dump(2) + "\n");
  write_text(sibling(path, ".f1.csv"), r.f1_csv());
  std::printf("%s: n=%zu accuracy=%.4f macro_f1=%.4f -> %s\n", what, r.n_samples, double(r.accuracy),
              double(r.macro_f1), path.c_str());
}

int evaluate(const Config& cfg) {
  const train::Checkpoint ckpt = train::load_checkpoint(require(cfg.ckpt, "ckpt"));
  model::ModelParams params = load_params(cfg, ckpt);
  const auto every = all_labels(cfg, cfg.labels);
  data::Dataset ds = load_data(cfg, require(cfg.data, "data"), every.size());
  if (!cfg.classes.empty()) ds = data::select_classes(ds, cfg.classes);
  const std::string mode =
      !cfg.inference.empty() ? cfg.inference : ckpt.meta.value("inference", std::string("names"));
  train::parse_inference_mode(mode);
  const auto r =
      eval::evaluate(params, mode, ds, pick(every, cfg.classes), prompts(cfg).description, cfg.degenerate_f1);
  write_report(cfg, r, "eval");
  return 0;
}

int zero_shot(const Config& cfg) {
  const train::Checkpoint ckpt = train::load_checkpoint(require(cfg.ckpt, "ckpt"));
  model::ModelParams params = load_params(cfg, ckpt);
  const auto every = all_labels(cfg, cfg.unseen_labels.empty() ? cfg.labels : cfg.unseen_labels);
  data::Dataset ds = load_data(cfg, require(cfg.data, "data"), every.size());
  std::vector<text::Label> unseen = every;
  if (!cfg.classes.empty()) {
    ds = data::select_classes(ds, cfg.classes);
    unseen = pick(every, cfg.classes);
  }
  const auto seen = ckpt.meta.value("class_names", std::vector<std::string>{});
  const auto r = eval::zero_shot_eval(params, ds, unseen, seen, prompts(cfg).description);
  write_report(cfg, r, "zero-shot");
  return 0;
}

int grad_check(bool all, const std::vector<std::string>& only, const Config& cfg) {
  if (!all && only.empty()) fail(ErrorKind::ConfigError, "grad-check needs --all or --loss NAME");
  const auto results = checks::run_grad_suite(all ? std::vector<std::string>{} : only, cfg.run.seed);
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-18s max_rel_err=%.3e coords=%zu time=%.2fs %s\n", r.name.c_str(), double(r.max_relative_error),
                r.coords_checked, r.seconds, r.passed ? "PASS" : "FAIL");
    ok = ok && r.passed;
  }
  return ok ? 0 : 2;
}

int sweep_lambda(Config cfg, const std::string& values) {
  cfg.run.stage = train::Stage::Finetune;
  const fs::path dir = run_dir(cfg);
  const auto every = all_labels(cfg, cfg.labels);
  const data::Dataset train_ds = load_data(cfg, require(cfg.data, "data"), every.size());
  data::Dataset test_ds = load_data(cfg, require(cfg.test_data, "test_data"), every.size());
  if (!cfg.classes.empty()) test_ds = data::select_classes(test_ds, cfg.classes);
  const auto labels = pick(every, cfg.classes);

  std::vector<float> lambdas;
  std::stringstream ss(values);
  for (std::string item; std::getline(ss, item, ',');) {
    Config probe;
    cli::set_key(probe, "lambda", item);
    lambdas.push_back(probe.run.lambda);
  }
  if (lambdas.empty()) fail(ErrorKind::ConfigError, "key 'values': no lambda given");

  write_text(dir / "config.toml", cli::to_toml(cfg));
  std::string csv = "lambda,metric\n";
  for (float lambda : lambdas) {
    cfg.run.lambda = lambda;
    Finetuned f = run_finetune(cfg, train_ds, labels);
    const auto r = eval::evaluate(f.result.params, train::to_string(train::inference_mode(cfg.run)), test_ds, labels,
                                  prompts(cfg).description, cfg.degenerate_f1);
    const float metric = cfg.run.task == data::Task::Fer ? r.accuracy : r.macro_f1;
    char line[64];
    std::snprintf(line, sizeof line, "%.9g,%.6f\n", double(lambda), double(metric));
    csv += line;
    std::printf("lambda=%g metric=%.4f\n", double(lambda), double(metric));
  }
  write_text(dir / "sweep.csv", csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CLEF: contrastive facial-behaviour learning on synthetic data"};
  app.require_subcommand(1);
  std::string config_path;
  bool all = false;
  std::vector<std::string> losses;
  std::string values;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-data", "generate a synthetic dataset (--out data.jsonl)"},
      {"pretrain", "activity-text pre-training (--data D --out DIR)"},
      {"finetune", "label name/description fine-tuning (--data D [--init C] --out DIR)"},
      {"eval", "evaluate a checkpoint (--ckpt C --data D [--labels L] [--report R])"},
      {"zero-shot", "description-based evaluation on unseen classes (--ckpt C --data D --unseen-labels L)"},
      {"grad-check", "finite-difference gradient suites (--all | --loss NAME)"},
      {"sweep-lambda", "fine-tune and evaluate for each lambda (--values 0.5,1,2,4)"},
  };
  std::string footer = "Configuration keys (TOML or --key value):\n";
  for (const auto& k : cli::registry()) footer += "  " + k.name + " [" + k.type + "] " + k.help + "\n";
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->allow_extras();
    sub->add_option("--config", config_path, "TOML configuration file");
    sub->footer(footer);
    if (name == "grad-check") {
      sub->add_flag("--all", all, "run every suite");
      sub->add_option("--loss", losses, "suite name: " + [] {
        std::string s;
        for (const auto& n : checks::grad_case_names()) s += (s.empty() ? "" : ", ") + n;
        return s;
      }());
    }
    if (name == "sweep-lambda") sub->add_option("--values", values, "comma-separated lambdas")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    const Config cfg = cli::resolve(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path),
                                    sub->remaining(), std::getenv("CLEF_SEED"));
    const std::string name = sub->get_name();
    if (name == "gen-data") return gen_data(cfg);
    if (name == "pretrain") return pretrain(cfg);
    if (name == "finetune") return finetune(cfg);
    if (name == "eval") return evaluate(cfg);
    if (name == "zero-shot") return zero_shot(cfg);
    if (name == "grad-check") return grad_check(all, losses, cfg);
    if (name == "sweep-lambda") return sweep_lambda(cfg, values);
  } catch (const Error& e) {
    std::fprintf(stderr, "clef: %s\n", e.what());
    return cli::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "clef: %s\n", e.what());
    return 2;
  }
  return 1;
}
