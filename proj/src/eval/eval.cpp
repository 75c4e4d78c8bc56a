#include "clef/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <limits>
#include <map>
#include <set>

#include "clef/error.hpp"
#include "clef/numerics/ops.hpp"

namespace clef::eval {

using num::Tensor;

namespace {

double dot_rows(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) s += double(a.at(i, c)) * b.at(j, c);
  return s;
}

void check_dims(const Tensor& zI, const Tensor& zT) {
  if (zI.cols() != zT.cols() || zT.rows() == 0) {
    fail(ErrorKind::SizeMismatch, "image embeddings " + num::shape_string(zI.shape) + " vs text embeddings " +
                                      num::shape_string(zT.shape));
  }
}

constexpr std::size_t kChunk = 256;

}  // namespace

std::vector<int> predict_fer(const Tensor& zI, const Tensor& zT) {
  check_dims(zI, zT);
  std::vector<int> out(zI.rows());
  for (std::size_t i = 0; i < zI.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < zT.rows(); ++c) {
      const double s = dot_rows(zI, i, zT, c);
      if (s > best) {
        best = s;
        out[i] = static_cast<int>(c);
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> predict_au(const Tensor& zI, const Tensor& zT, float tau, float threshold) {
  check_dims(zI, zT);
  if (!(tau > 0.0f)) fail(ErrorKind::BadTemperature, "tau must be > 0");
  std::vector<std::uint8_t> out(zI.rows() * zT.rows());
  for (std::size_t i = 0; i < zI.rows(); ++i)
    for (std::size_t c = 0; c < zT.rows(); ++c) {
      const double p = 1.0 / (1.0 + std::exp(-dot_rows(zI, i, zT, c) / tau));
      out[i * zT.rows() + c] = p >= threshold ? 1 : 0;
    }
  return out;
}

F1Result f1_scores(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth, std::size_t n_classes,
                   float degenerate_value) {
  if (n_classes == 0 || pred.size() != truth.size() || pred.size() % n_classes != 0) {
    fail(ErrorKind::ShapeMismatch, "prediction and target shapes differ");
  }
  F1Result r;
  r.tp.assign(n_classes, 0);
  r.fp.assign(n_classes, 0);
  r.fn.assign(n_classes, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] > 1 || truth[i] > 1) fail(ErrorKind::TargetNotBinary, "F1 inputs must be binary");
    const std::size_t c = i % n_classes;
    if (pred[i] && truth[i]) ++r.tp[c];
    if (pred[i] && !truth[i]) ++r.fp[c];
    if (!pred[i] && truth[i]) ++r.fn[c];
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const std::size_t denom = 2 * r.tp[c] + r.fp[c] + r.fn[c];
    const float f = denom == 0 ? degenerate_value : static_cast<float>(2.0 * double(r.tp[c]) / double(denom));
    r.per_class.push_back(f);
    sum += f;
  }
  r.macro = static_cast<float>(sum / double(n_classes));
  return r;
}

float accuracy(std::span<const int> pred, std::span<const int> truth) {
  if (pred.empty()) fail(ErrorKind::EmptyInput, "accuracy of no predictions");
  if (pred.size() != truth.size()) fail(ErrorKind::LengthMismatch, "prediction and target lengths differ");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
  return static_cast<float>(double(hit) / double(pred.size()));
}

nlohmann::json EvalReport::to_json() const {
  return {{"task", data::to_string(task)}, {"class_names", class_names}, {"per_class_f1", per_class_f1},
          {"macro_f1", macro_f1},           {"accuracy", accuracy},       {"confusion", confusion},
          {"n_samples", n_samples},         {"fingerprint", fingerprint}};
}

std::string EvalReport::f1_csv() const {
  std::string out = "class,f1\n";
  for (std::size_t c = 0; c < per_class_f1.size(); ++c) {
    const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", double(per_class_f1[c]));
    out += name + "," + buf + "\n";
  }
  return out;
}

namespace {

template <typename Fn>
Tensor encode_in_chunks(model::ModelParams& params, const data::Dataset& ds, Fn pick) {
  const std::size_t pixels = ds.height * ds.width;
  Tensor out;
  for (std::size_t start = 0; start < ds.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, ds.size() - start);
    Tensor images = Tensor::matrix(n, pixels);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(ds.samples[start + i].image.begin(), ds.samples[start + i].image.end(),
                images.values.begin() + std::ptrdiff_t(i * pixels));
    }
    num::Graph g;
    model::Binder b(g, params);
    const Tensor& z = pick(model::encode_image(b, images)).value();
    if (out.values.empty()) out = Tensor::matrix(0, z.cols());
    out.values.insert(out.values.end(), z.values.begin(), z.values.end());
    out.shape[0] += n;
  }
  return out;
}

}  // namespace

Tensor embed_images(model::ModelParams& params, const data::Dataset& ds) {
  if (ds.empty()) fail(ErrorKind::EmptyDataset, "no images to embed");
  return encode_in_chunks(params, ds, [](const model::ImageOutput& o) { return o.embedding; });
}

Tensor pooled_features(model::ModelParams& params, const data::Dataset& ds) {
  if (ds.empty()) fail(ErrorKind::EmptyDataset, "no images to embed");
  return encode_in_chunks(params, ds, [](const model::ImageOutput& o) { return o.pooled; });
}

Tensor embed_prompts(model::ModelParams& params, const std::vector<std::string>& prompts, const std::string& tower) {
  std::vector<text::TokenizedText> toks;
  for (const auto& p : prompts) toks.push_back(text::tokenize(p, params.arch.context, params.arch.vocab));
  num::Graph g;
  model::Binder b(g, params);
  return model::encode_text(b, toks, tower).value();
}

std::vector<std::string> name_prompts(const std::vector<text::Label>& labels) {
  const auto set = text::make_template_set(text::TemplateKind::LabelName, {std::string(text::kLabelNameTemplate)});
  std::vector<std::string> out;
  for (const auto& l : labels) out.push_back(text::render_prompt(set, 0, l.name));
  return out;
}

std::vector<std::string> description_prompts(const std::vector<text::Label>& labels, const text::TemplateSet& set) {
  std::vector<std::string> out;
  for (const auto& l : labels) out.push_back(text::render_prompt(set, 0, l.description));
  return out;
}

EvalReport report_from_predictions(const data::Dataset& ds, std::span<const int> fer_pred,
                                   std::span<const std::uint8_t> au_pred, const std::vector<std::string>& class_names,
                                   float degenerate_f1) {
  EvalReport r;
  r.task = ds.task;
  r.class_names = class_names;
  r.n_samples = ds.size();
  const std::size_t C = ds.n_classes;
  std::vector<std::uint8_t> pred_hot, true_hot;
  if (ds.task == data::Task::Fer) {
    std::vector<int> truth;
    for (const auto& s : ds.samples) truth.push_back(s.target_class);
    r.accuracy = accuracy(fer_pred, truth);
    r.confusion.assign(C, std::vector<std::size_t>(C, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
      ++r.confusion[std::size_t(truth[i])][std::size_t(fer_pred[i])];
      std::vector<std::uint8_t> p(C, 0), t(C, 0);
      p[std::size_t(fer_pred[i])] = 1;
      t[std::size_t(truth[i])] = 1;
      pred_hot.insert(pred_hot.end(), p.begin(), p.end());
      true_hot.insert(true_hot.end(), t.begin(), t.end());
    }
  } else {
    for (const auto& s : ds.samples) true_hot.insert(true_hot.end(), s.target_multi.begin(), s.target_multi.end());
    pred_hot.assign(au_pred.begin(), au_pred.end());
    std::size_t exact = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      exact += std::equal(pred_hot.begin() + std::ptrdiff_t(i * C), pred_hot.begin() + std::ptrdiff_t((i + 1) * C),
                          true_hot.begin() + std::ptrdiff_t(i * C));
    }
    r.accuracy = static_cast<float>(double(exact) / double(ds.size()));
  }
  const F1Result f1 = f1_scores(pred_hot, true_hot, C, degenerate_f1);
  r.per_class_f1 = f1.per_class;
  r.macro_f1 = f1.macro;
  if (ds.task == data::Task::Aur) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t tn = ds.size() - f1.tp[c] - f1.fp[c] - f1.fn[c];
      r.confusion.push_back({f1.tp[c], f1.fp[c], f1.fn[c], tn});
    }
  }
  return r;
}

EvalReport evaluate(model::ModelParams& params, const std::string& inference, const data::Dataset& ds,
                    const std::vector<text::Label>& labels, const text::TemplateSet& description_set,
                    float degenerate_f1) {
  data::validate(ds);
  if (ds.empty()) fail(ErrorKind::EmptyDataset, "evaluation needs samples");
  const std::size_t C = ds.n_classes;
  std::vector<std::string> names;
  for (const auto& l : labels) names.push_back(l.name);
  std::vector<int> fer_pred;
  std::vector<std::uint8_t> au_pred;
  if (inference == "head") {
    if (params.arch.head_classes != C) fail(ErrorKind::ArchMismatch, "linear head size differs from the class count");
    const Tensor feats = pooled_features(params, ds);
    num::Graph g;
    model::Binder b(g, params);
    const Tensor logits = model::head_logits(b, g.constant(feats)).value();
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      if (ds.task == data::Task::Fer) {
        int best = 0;
        for (std::size_t c = 1; c < C; ++c)
          if (logits.at(i, c) > logits.at(i, std::size_t(best))) best = int(c);
        fer_pred.push_back(best);
      } else {
        for (std::size_t c = 0; c < C; ++c) au_pred.push_back(logits.at(i, c) >= 0.0f ? 1 : 0);
      }
    }
  } else {
    if (labels.size() != C) fail(ErrorKind::SizeMismatch, "label count differs from the class count");
    const bool use_names = inference == "names";
    if (!use_names && inference != "descriptions") fail(ErrorKind::ConfigError, "unknown inference mode " + inference);
    const Tensor zT = use_names ? embed_prompts(params, name_prompts(labels), model::kTextTower)
                                : embed_prompts(params, description_prompts(labels, description_set),
                                                model::description_tower(params.arch));
    const Tensor zI = embed_images(params, ds);
    if (ds.task == data::Task::Fer) {
      fer_pred = predict_fer(zI, zT);
    } else {
      const float scale = std::min(std::exp(params.at("log_logit_scale").values[0]), params.arch.max_logit_scale);
      au_pred = predict_au(zI, zT, 1.0f / scale);
    }
  }
  EvalReport r = report_from_predictions(ds, fer_pred, au_pred, names, degenerate_f1);
  r.fingerprint = params.arch.fingerprint();
  return r;
}

EvalReport zero_shot_eval(model::ModelParams& params, const data::Dataset& unseen,
                          const std::vector<text::Label>& unseen_labels, const std::vector<std::string>& seen_names,
                          const text::TemplateSet& description_set) {
  const std::set<std::string> seen(seen_names.begin(), seen_names.end());
  for (const auto& l : unseen_labels) {
    if (seen.count(l.name)) fail(ErrorKind::ClassOverlap, "class '" + l.name + "' was seen in fine-tuning");
  }
  if (unseen.task != data::Task::Fer) fail(ErrorKind::ConfigError, "zero-shot evaluation is defined for FER");
  return evaluate(params, "descriptions", unseen, unseen_labels, description_set);
}

float linear_probe(const Tensor& x, std::span<const int> labels, const ProbeOptions& opts) {
  const std::size_t n = x.rows(), d = x.cols();
  if (labels.size() != n) fail(ErrorKind::LengthMismatch, "probe labels do not match embeddings");
  std::map<int, int> remap;
  for (int l : labels) remap.emplace(l, 0);
  int k = 0;
  for (auto& [label, idx] : remap) idx = k++;
  const std::size_t K = remap.size();
  if (opts.k_folds < 2) fail(ErrorKind::ConfigError, "linear probe needs at least 2 folds");
  if (n < 10 * K) {
    fail(ErrorKind::TooFewSamples, std::to_string(n) + " samples for " + std::to_string(K) + " classes (need 10 per class)");
  }
  if (K == 1) return 1.0f;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(opts.seed);
  std::shuffle(order.begin(), order.end(), rng);

  double acc_sum = 0.0;
  for (std::size_t fold = 0; fold < opts.k_folds; ++fold) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < n; ++i) (i % opts.k_folds == fold ? test : train).push_back(order[i]);

    // Standardize with training-fold statistics.
    std::vector<double> mu(d, 0.0), sd(d, 0.0);
    for (std::size_t i : train)
      for (std::size_t c = 0; c < d; ++c) mu[c] += x.at(i, c);
    for (auto& m : mu) m /= double(train.size());
    for (std::size_t i : train)
      for (std::size_t c = 0; c < d; ++c) sd[c] += (x.at(i, c) - mu[c]) * (x.at(i, c) - mu[c]);
    for (auto& s : sd) s = std::sqrt(s / double(train.size())) + 1e-8;
    auto feat = [&](std::size_t i, std::size_t c) { return (x.at(i, c) - mu[c]) / sd[c]; };

    std::vector<double> W(d * K, 0.0), bias(K, 0.0), gW(d * K), gb(K), p(K);
    for (std::size_t step = 0; step < opts.steps; ++step) {
      std::fill(gW.begin(), gW.end(), 0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      for (std::size_t i : train) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < K; ++j) {
          p[j] = bias[j];
          for (std::size_t c = 0; c < d; ++c) p[j] += feat(i, c) * W[c * K + j];
          mx = std::max(mx, p[j]);
        }
        double s = 0.0;
        for (auto& v : p) s += (v = std::exp(v - mx));
        const std::size_t y = std::size_t(remap[labels[i]]);
        for (std::size_t j = 0; j < K; ++j) {
          const double g = p[j] / s - (j == y ? 1.0 : 0.0);
          gb[j] += g;
          for (std::size_t c = 0; c < d; ++c) gW[c * K + j] += g * feat(i, c);
        }
      }
      const double scale = opts.lr / double(train.size());
      for (std::size_t j = 0; j < W.size(); ++j) W[j] -= scale * gW[j];
      for (std::size_t j = 0; j < K; ++j) bias[j] -= scale * gb[j];
    }
    std::size_t hit = 0;
    for (std::size_t i : test) {
      std::size_t best = 0;
      double best_v = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < K; ++j) {
        double v = bias[j];
        for (std::size_t c = 0; c < d; ++c) v += feat(i, c) * W[c * K + j];
        if (v > best_v) {
          best_v = v;
          best = j;
        }
      }
      hit += best == std::size_t(remap[labels[i]]);
    }
    acc_sum += double(hit) / double(test.size());
  }
  return static_cast<float>(acc_sum / double(opts.k_folds));
}

}  // namespace clef::eval
