// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Usage: clef_acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "clef/checks/grad_suite.hpp"
#include "clef/data/dataset.hpp"
#include "clef/data/synth.hpp"
#include "clef/error.hpp"
#include "clef/eval/eval.hpp"
#include "clef/losses/losses.hpp"
#include "clef/numerics/graph.hpp"
#include "clef/train/checkpoint.hpp"
#include "clef/train/optim.hpp"
#include "clef/train/train.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace clef;
namespace fs = std::filesystem;
using testing::Matrix;
using testing::random_unit_rows;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "clef_acceptance";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Matrix to_matrix(const num::Tensor& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

num::Var scale_of(num::Graph& g, float temperature) { return g.constant(num::Tensor::scalar(1.0f / temperature)); }

double rel_err(double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); }

// 1 -------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = checks::run_grad_suite();
  const double secs = seconds_since(t0);
  bool ok = secs < 120.0;
  float worst = 0.0f;
  std::string worst_name;
  for (const auto& c : cases) {
    ok = ok && c.passed;
    if (c.max_relative_error >= worst) {
      worst = c.max_relative_error;
      worst_name = c.name;
    }
  }
  return {ok, fmt("%zu cases, worst %.2e (%s) < %.0e, %.1fs < 120s", cases.size(), worst, worst_name.c_str(),
                  double(checks::kGradTolerance), secs)};
}

// 2 -------------------------------------------------------------------------

Outcome oracle_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2718);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  auto temp_of = [&] { return std::uniform_real_distribution<float>(0.05f, 1.0f)(rng); };
  double worst[4] = {0, 0, 0, 0};
  const int instances = 100;

  for (int trial = 0; trial < instances; ++trial) {
    num::Graph g;
    const std::size_t n = pick(1, 6), d = pick(2, 12), c = pick(1, 8);

    {  // supcon over the paired layout
      const float temp = temp_of();
      const num::Tensor a = random_unit_rows(rng, n, d), a2 = random_unit_rows(rng, n, d);
      std::vector<int> labels(n);
      for (auto& v : labels) v = int(pick(0, 2));
      std::vector<float> vals(a.values);
      vals.insert(vals.end(), a2.values.begin(), a2.values.end());
      const num::Tensor cand({2 * n, d}, vals);
      std::vector<int> cand_labels(labels);
      cand_labels.insert(cand_labels.end(), labels.begin(), labels.end());
      std::vector<long> self(n);
      for (std::size_t i = 0; i < n; ++i) self[i] = long(i);
      const double want = testing::supcon_oracle(to_matrix(a), to_matrix(cand), labels, cand_labels, self, temp);
      const double got =
          losses::supcon_loss(g.constant(a), g.constant(cand), losses::paired_layout(labels), temp).item();
      worst[0] = std::max(worst[0], rel_err(got, want));
    }
    {
      const float temp = temp_of();
      const num::Tensor zd = random_unit_rows(rng, c, d), zn = random_unit_rows(rng, c, d);
      const double want = testing::name_description_oracle(to_matrix(zd), to_matrix(zn), temp);
      const double got = losses::name_description_loss(g.constant(zd), g.constant(zn), scale_of(g, temp)).item();
      worst[1] = std::max(worst[1], rel_err(got, want));
    }
    std::vector<float> w(c);
    std::vector<double> wd(c);
    for (std::size_t k = 0; k < c; ++k) wd[k] = w[k] = std::uniform_real_distribution<float>(0.2f, 3.0f)(rng);
    {
      const float temp = temp_of();
      const num::Tensor zi = random_unit_rows(rng, n, d), zn = random_unit_rows(rng, c, d);
      std::vector<int> targets(n);
      for (auto& v : targets) v = int(pick(0, c - 1));
      const double want = testing::fer_oracle(to_matrix(zi), to_matrix(zn), targets, wd, temp);
      const double got =
          losses::fer_image_name_loss(g.constant(zi), g.constant(zn), targets, w, scale_of(g, temp)).item();
      worst[2] = std::max(worst[2], rel_err(got, want));
    }
    {
      const float temp = temp_of();
      const num::Tensor zi = random_unit_rows(rng, n, d), zn = random_unit_rows(rng, c, d);
      std::vector<std::uint8_t> flat(n * c);
      std::vector<std::vector<int>> rows(n, std::vector<int>(c));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < c; ++k) rows[i][k] = flat[i * c + k] = std::uint8_t(rng() & 1);
      const double want = testing::au_oracle(to_matrix(zi), to_matrix(zn), rows, wd, temp);
      const double got =
          losses::au_image_name_loss(g.constant(zi), g.constant(zn), flat, w, scale_of(g, temp)).item();
      worst[3] = std::max(worst[3], rel_err(got, want));
    }
  }
  const double secs = seconds_since(t0);
  const double tol = 1e-5;
  const bool ok = worst[0] <= tol && worst[1] <= tol && worst[2] <= tol && worst[3] <= tol && secs < 60.0;
  return {ok, fmt("%d instances each; worst rel. error supcon %.1e, name-desc %.1e, fer %.1e, au %.1e (tol %.0e), %.2fs",
                  instances, worst[0], worst[1], worst[2], worst[3], tol, secs)};
}

// 3 -------------------------------------------------------------------------

num::Tensor same_rows(std::size_t n, std::vector<float> row) {
  num::Tensor t = num::Tensor::matrix(n, row.size());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < row.size(); ++c) t.at(r, c) = row[c];
  return t;
}

Outcome analytic_anchors() {
  const double ln2 = std::numbers::ln2;
  num::Graph g;
  std::vector<std::string> failed;
  auto expect = [&](const char* what, double got, double want, double tol) {
    if (!(std::abs(got - want) <= tol)) failed.push_back(fmt("%s got %.9g want %.9g", what, got, want));
  };

  // One anchor whose only valid candidate is its positive.
  const std::vector<int> one = {0};
  const num::Tensor x = same_rows(1, {0.6f, 0.8f});
  const num::Tensor y = same_rows(1, {0.0f, 1.0f});
  std::vector<float> vals(x.values);
  vals.insert(vals.end(), y.values.begin(), y.values.end());
  expect("single-candidate supcon",
         losses::supcon_loss(g.constant(x), g.constant(num::Tensor({2, 2}, vals)), losses::paired_layout(one), 0.25f)
             .item(),
         0.0, 1e-7);

  const num::Tensor e1 = same_rows(1, {1.0f, 0.0f});
  expect("C=1 name-description",
         losses::name_description_loss(g.constant(e1), g.constant(e1), scale_of(g, 0.07f)).item(), 0.0, 1e-7);

  // Identical rows make every logit equal.
  const num::Tensor e2 = same_rows(2, {1.0f, 0.0f});
  expect("uniform C=2 name-description",
         losses::name_description_loss(g.constant(e2), g.constant(e2), scale_of(g, 0.07f)).item(), ln2, 1e-6);

  // Orthogonal image and name rows give zero logits.
  const std::size_t C = 5;
  const num::Tensor imgs = same_rows(3, {1.0f, 0.0f});
  const num::Tensor names = same_rows(C, {0.0f, 1.0f});
  const std::vector<std::uint8_t> targets = {1, 0, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 1};
  const std::vector<float> unit(C, 1.0f);
  expect("zero-logit AU loss per sample",
         losses::au_image_name_loss(g.constant(imgs), g.constant(names), targets, unit, scale_of(g, 0.07f)).item(),
         double(C) * ln2, 1e-6);

  const float mixed = losses::finetune_loss(0.5f, 0.7f, 2.0f);
  if (mixed != 0.85f) failed.push_back(fmt("finetune loss (2*0.5+0.7)/2 = %.9g", double(mixed)));
  const float graph_mixed = losses::finetune_loss(g.constant(num::Tensor::scalar(0.5f)),
                                                  g.constant(num::Tensor::scalar(0.7f)), 2.0f)
                                .item();
  if (graph_mixed != 0.85f) failed.push_back(fmt("graph finetune loss = %.9g", double(graph_mixed)));

  std::string detail = "supcon 0, L_DN(C=1) 0, L_DN(C=2) ln2, AU C*ln2, (2*0.5+0.7)/2 = 0.85";
  for (const auto& f : failed) detail += "; " + f;
  return {failed.empty(), detail};
}

// 4 -------------------------------------------------------------------------

Outcome determinism() {
  data::SynthConfig sc;
  sc.samples_per_activity = 24;
  const data::Dataset ds = data::generate_synthetic(sc);
  const auto labels = data::synthetic_labels(sc);
  const auto prompts = train::PromptSet::bundled(ds.task);
  const model::ArchConfig arch;

  auto run_once = [&](const std::string& tag) {
    train::RunConfig pc;
    pc.stage = train::Stage::Pretrain;
    pc.epochs = 2;
    pc.batch_size = 32;
    pc.seed = 3;
    const auto pre = train::pretrain(pc, arch, ds, prompts);
    train::save_checkpoint(scratch(tag + "_pre.clef"), pre.checkpoint);
    train::write_loss_csv(scratch(tag + "_pre.csv"), pc.stage, pre.log);

    train::RunConfig fc = pc;
    fc.stage = train::Stage::Finetune;
    const auto ft = train::finetune(fc, arch, ds, labels, prompts, &pre.checkpoint);
    train::save_checkpoint(scratch(tag + "_ft.clef"), ft.checkpoint);
    train::write_loss_csv(scratch(tag + "_ft.csv"), fc.stage, ft.log);
  };
  run_once("a");
  run_once("b");

  std::size_t bytes = 0;
  bool same = true;
  for (const char* f : {"_pre.clef", "_pre.csv", "_ft.clef", "_ft.csv"}) {
    const std::string a = slurp(scratch(std::string("a") + f)), b = slurp(scratch(std::string("b") + f));
    same = same && !a.empty() && a == b;
    bytes += a.size();
  }
  return {same, fmt("pre-train + fine-tune twice: checkpoints and loss CSVs %s (%zu bytes compared)",
                    same ? "byte-identical" : "DIFFER", bytes)};
}

// 5 -------------------------------------------------------------------------

// One batch of 16 samples (2 per activity), trained on for 200 steps.
Outcome overfit() {
  std::string detail;
  bool ok = true;
  for (const auto task : {data::Task::Fer, data::Task::Aur}) {
    data::SynthConfig sc;
    sc.task = task;
    sc.samples_per_activity = 2;
    const data::Dataset batch = data::generate_synthetic(sc);
    const auto labels = data::synthetic_labels(sc);
    const auto prompts = train::PromptSet::bundled(task);

    train::RunConfig cfg;
    cfg.stage = train::Stage::Finetune;
    cfg.task = task;
    cfg.batch_size = batch.size();
    cfg.epochs = 200;  // one step per epoch
    cfg.warmup_epochs = 20;
    cfg.lr = 2e-3f;
    cfg.min_lr = cfg.lr;
    cfg.finetune_augment = false;
    // Weights estimated from 16 samples are dominated by the floor of any
    // absent AU; the batch is fitted unweighted.
    cfg.class_weighting = task == data::Task::Fer;
    auto r = train::finetune(cfg, {}, batch, labels, prompts);
    const auto rep =
        eval::evaluate(r.params, train::to_string(train::inference_mode(cfg)), batch, labels, prompts.description);
    if (task == data::Task::Fer) {
      ok = ok && rep.accuracy == 1.0f;
      detail += fmt("FER %zu samples, %zu steps: train accuracy %.3f", batch.size(), r.log.size(), rep.accuracy);
    } else {
      ok = ok && rep.macro_f1 == 1.0f;
      detail += fmt("; AUR %zu samples, %zu steps: macro F1 %.3f", batch.size(), r.log.size(), rep.macro_f1);
    }
  }
  return {ok, detail};
}

// 6-8 -----------------------------------------------------------------------

constexpr int kSeeds = 3;
constexpr std::size_t kPretrainEpochs = 10;
constexpr std::size_t kFinetuneEpochs = 5;
constexpr float kPretrainLr = 1e-3f;
constexpr float kFinetuneLr = 2e-4f;

struct SeedData {
  data::SynthConfig synth;
  data::Split split;
  std::vector<text::Label> labels;
  train::PromptSet prompts = train::PromptSet::bundled(data::Task::Fer);
};

SeedData seed_data(int seed) {
  SeedData s;
  s.synth.seed = std::uint64_t(seed);
  const data::Dataset all = data::generate_synthetic(s.synth);
  s.split = data::split_by_identity(all, 0.2, std::uint64_t(seed));
  s.labels = data::synthetic_labels(s.synth);
  return s;
}

enum class PretrainKind { Activity, ImageOnly, SelfView };

train::Checkpoint pretrain_model(const SeedData& s, PretrainKind kind, int seed) {
  train::RunConfig cfg;
  cfg.stage = train::Stage::Pretrain;
  cfg.epochs = kPretrainEpochs;
  cfg.lr = kPretrainLr;
  cfg.seed = std::uint64_t(seed);
  cfg.use_activity_text = kind == PretrainKind::Activity;
  cfg.self_view_positives = kind == PretrainKind::SelfView;
  return train::pretrain(cfg, {}, s.split.train, s.prompts).checkpoint;
}

struct FinetuneVariant {
  bool names = true;
  bool descriptions = true;
  bool linear_head = false;
};

train::RunConfig finetune_config(const FinetuneVariant& v, int seed) {
  train::RunConfig cfg;
  cfg.stage = train::Stage::Finetune;
  cfg.epochs = kFinetuneEpochs;
  cfg.lr = kFinetuneLr;
  cfg.seed = std::uint64_t(seed);
  cfg.use_names = v.names;
  cfg.use_descriptions = v.descriptions;
  cfg.linear_head = v.linear_head;
  return cfg;
}

float finetune_accuracy(const SeedData& s, const FinetuneVariant& v, const train::Checkpoint* init, int seed) {
  const train::RunConfig cfg = finetune_config(v, seed);
  auto r = train::finetune(cfg, {}, s.split.train, s.labels, s.prompts, init);
  return eval::evaluate(r.params, train::to_string(train::inference_mode(cfg)), s.split.test, s.labels,
                        s.prompts.description)
      .accuracy;
}

struct Benchmarks {
  std::vector<float> clef, no_pretrain, linear_head, drop_pa, drop_n, drop_d;
  std::vector<float> id_activity, id_ssl, act_activity, act_ssl;
  std::vector<float> zero_shot;
  double slowest_run = 0.0;
};

double mean(const std::vector<float>& v) {
  double s = 0.0;
  for (float x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

std::string series(const std::vector<float>& v) {
  std::string out = fmt("%.3f [", mean(v));
  for (std::size_t i = 0; i < v.size(); ++i) out += fmt(i ? " %.3f" : "%.3f", double(v[i]));
  return out + "]";
}

std::pair<float, float> probes(const train::Checkpoint& ckpt, const data::Dataset& ds, int seed) {
  model::ModelParams params = train::params_from_checkpoint(ckpt);
  const num::Tensor z = eval::embed_images(params, ds);
  std::vector<int> identity, activity;
  for (const auto& smp : ds.samples) {
    identity.push_back(smp.identity);
    activity.push_back(smp.activity);
  }
  const eval::ProbeOptions opts{.seed = std::uint64_t(seed)};
  return {eval::linear_probe(z, identity, opts), eval::linear_probe(z, activity, opts)};
}

void run_benchmarks(Benchmarks& b, bool need6, bool need7, bool need8) {
  const std::vector<int> seen = {3, 4, 5};       // fear, happiness, neutral
  const std::vector<int> unseen = {0, 2, 6, 7};  // anger, disgust, sadness, surprise
  for (int seed = 0; seed < kSeeds; ++seed) {
    const SeedData s = seed_data(seed);
    auto t0 = std::chrono::steady_clock::now();
    const train::Checkpoint pa = pretrain_model(s, PretrainKind::Activity, seed);
    const double pa_secs = seconds_since(t0);
    auto timed = [&](std::vector<float>& into, auto&& fn, double extra = 0.0) {
      const auto t = std::chrono::steady_clock::now();
      into.push_back(fn());
      b.slowest_run = std::max(b.slowest_run, seconds_since(t) + extra);
    };

    if (need6) {
      timed(b.clef, [&] { return finetune_accuracy(s, {}, &pa, seed); }, pa_secs);
      timed(b.drop_n, [&] { return finetune_accuracy(s, {.names = false}, &pa, seed); }, pa_secs);
      timed(b.drop_d, [&] { return finetune_accuracy(s, {.descriptions = false}, &pa, seed); }, pa_secs);
      timed(b.no_pretrain, [&] { return finetune_accuracy(s, {}, nullptr, seed); });
      timed(b.linear_head, [&] {
        return finetune_accuracy(s, {.names = false, .descriptions = false, .linear_head = true}, nullptr, seed);
      });
      timed(b.drop_pa, [&] {
        const train::Checkpoint pi = pretrain_model(s, PretrainKind::ImageOnly, seed);
        return finetune_accuracy(s, {}, &pi, seed);
      });
    }
    if (need7) {
      const auto [id_pa, act_pa] = probes(pa, s.split.test, seed);
      const auto t = std::chrono::steady_clock::now();
      const train::Checkpoint ssl = pretrain_model(s, PretrainKind::SelfView, seed);
      b.slowest_run = std::max(b.slowest_run, seconds_since(t));
      const auto [id_ssl, act_ssl] = probes(ssl, s.split.test, seed);
      b.id_activity.push_back(id_pa);
      b.act_activity.push_back(act_pa);
      b.id_ssl.push_back(id_ssl);
      b.act_ssl.push_back(act_ssl);
    }
    if (need8) {
      timed(b.zero_shot, [&] {
        const data::Dataset train_seen = data::select_classes(s.split.train, seen);
        const data::Dataset test_unseen = data::select_classes(s.split.test, unseen);
        std::vector<text::Label> seen_labels, unseen_labels;
        std::vector<std::string> seen_names;
        for (int c : seen) {
          seen_labels.push_back(s.labels[std::size_t(c)]);
          seen_names.push_back(s.labels[std::size_t(c)].name);
        }
        for (int c : unseen) unseen_labels.push_back(s.labels[std::size_t(c)]);
        const train::RunConfig cfg = finetune_config({}, seed);
        auto r = train::finetune(cfg, {}, train_seen, seen_labels, s.prompts, &pa);
        return eval::zero_shot_eval(r.params, test_unseen, unseen_labels, seen_names, s.prompts.description)
            .accuracy;
      }, pa_secs);
    }
  }
}

Outcome end_to_end(const Benchmarks& b) {
  const double clef = mean(b.clef);
  const bool beats = clef > mean(b.no_pretrain) && clef > mean(b.linear_head);
  const bool ordering = clef >= mean(b.drop_pa) && clef >= mean(b.drop_n) && clef >= mean(b.drop_d);
  const bool fast = b.slowest_run < 600.0;
  std::string d = fmt("(a) %s; (b) %s; slowest run %.0fs < 600s. test acc: CLEF %s, no pre-train %s, linear head %s, "
                      "-PA %s, -N %s, -D %s",
                      beats ? "ok" : "FAILED", ordering ? "ok" : "FAILED", b.slowest_run, series(b.clef).c_str(),
                      series(b.no_pretrain).c_str(), series(b.linear_head).c_str(), series(b.drop_pa).c_str(),
                      series(b.drop_n).c_str(), series(b.drop_d).c_str());
  return {beats && ordering && fast, d};
}

Outcome disentanglement(const Benchmarks& b) {
  const bool less_identity = mean(b.id_activity) < mean(b.id_ssl);
  const bool activity_kept = mean(b.act_activity) >= mean(b.act_ssl);
  return {less_identity && activity_kept,
          fmt("identity probe: activity-pretrained %s vs self-view %s; activity probe: %s vs %s",
              series(b.id_activity).c_str(), series(b.id_ssl).c_str(), series(b.act_activity).c_str(),
              series(b.act_ssl).c_str())};
}

Outcome zero_shot(const Benchmarks& b) {
  const double threshold = 1.5 * 0.25;
  return {mean(b.zero_shot) > threshold,
          fmt("unseen 4-way accuracy %s > %.3f", series(b.zero_shot).c_str(), threshold)};
}

// 9 -------------------------------------------------------------------------

Outcome schedule_optimizer_checkpoint() {
  std::vector<std::string> failed;
  const train::Schedule s{2e-4f, 1e-6f, 10, 110};
  if (train::lr_at(0, s) != 0.0f) failed.push_back("lr_at(0)");
  if (train::lr_at(10, s) != s.base_lr) failed.push_back("lr_at(warmup end)");
  if (train::lr_at(110, s) != s.min_lr) failed.push_back("lr_at(total)");
  if (rel_err(train::lr_at(60, s), (double(s.base_lr) + double(s.min_lr)) / 2) > 1e-6) failed.push_back("lr midpoint");

  std::mt19937_64 rng(9);
  num::Tensor p = testing::random_tensor(rng, {6, 7});
  p.requires_grad = true;
  p.ensure_grad();
  train::OptimState st;
  num::Tensor* ptrs[] = {&p};
  const float lr = 0.05f, wd = 0.01f;
  const auto before = p.values;
  train::adamw_step(ptrs, st, lr, {.weight_decay = wd});
  for (std::size_t k = 0; k < before.size(); ++k)
    if (p.values[k] != static_cast<float>(double(before[k]) * (1.0 - double(lr) * double(wd)))) {
      failed.push_back("adamw decay");
      break;
    }

  model::ArchConfig arch;
  model::ModelParams params = model::init_params(arch, 4);
  const auto ckpt = train::make_checkpoint(params, nullptr, {{"step", 1}});
  const fs::path path = scratch("round.clef");
  train::save_checkpoint(path, ckpt);
  const auto back = train::load_checkpoint(path);
  bool exact = back.tensors.size() == ckpt.tensors.size() && back.meta == ckpt.meta;
  for (const auto& [name, t] : ckpt.tensors) {
    const auto it = back.tensors.find(name);
    exact = exact && it != back.tensors.end() && it->second.shape == t.shape &&
            std::memcmp(it->second.values.data(), t.values.data(), t.values.size() * sizeof(float)) == 0;
  }
  if (!exact) failed.push_back("checkpoint round trip");

  const std::string bytes = slurp(path);
  std::ofstream(path, std::ios::binary | std::ios::trunc).write(bytes.data(), std::streamsize(bytes.size() / 2));
  bool rejected = false;
  try {
    train::load_checkpoint(path);
  } catch (const Error& e) {
    rejected = e.kind() == ErrorKind::FormatError;
  }
  if (!rejected) failed.push_back("truncated checkpoint not rejected with FormatError");

  std::string detail = fmt("lr_at endpoints/midpoint, AdamW (1-lr*wd) shrink, %zu-tensor round trip, truncation",
                           ckpt.tensors.size());
  for (const auto& f : failed) detail += "; FAILED " + f;
  return {failed.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int n) { return only.empty() || only.contains(n); };

  int failures = 0;
  auto report = [&](int n, const char* title, const std::function<Outcome()>& fn) {
    if (!wanted(n)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %d %s: %s (%.1fs) %s\n", n, title, o.pass ? "PASS" : "FAIL", seconds_since(t0),
                o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "gradient suite", gradient_suite);
  report(2, "oracle suite", oracle_suite);
  report(3, "analytic anchors", analytic_anchors);
  report(4, "determinism", determinism);
  report(5, "overfit", overfit);

  Benchmarks bench;
  if (wanted(6) || wanted(7) || wanted(8)) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      run_benchmarks(bench, wanted(6), wanted(7), wanted(8));
    } catch (const std::exception& e) {
      std::printf("benchmarks threw: %s\n", e.what());
    }
    std::printf("benchmarks: %d seeds in %.0fs\n", kSeeds, seconds_since(t0));
  }
  report(6, "end-to-end benchmark", [&] { return end_to_end(bench); });
  report(7, "disentanglement", [&] { return disentanglement(bench); });
  report(8, "zero-shot", [&] { return zero_shot(bench); });
  report(9, "schedule/optimizer/checkpoint", schedule_optimizer_checkpoint);

  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
