#include <cmath>
#include <random>

#include "clef/data/synth.hpp"
#include "clef/error.hpp"
#include "clef/eval/eval.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace clef;
using namespace clef::eval;
using clef::testing::random_unit_rows;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::EmptyInput;
}

double dot(const num::Tensor& a, std::size_t i, const num::Tensor& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) s += double(a.at(i, c)) * double(b.at(j, c));
  return s;
}

model::ArchConfig tiny_arch() {
  model::ArchConfig a;
  a.width = 16;
  a.layers = 1;
  a.text_width = 16;
  a.text_layers = 1;
  a.embed_dim = 8;
  return a;
}

}  // namespace

TEST_CASE("predict_fer: exact match, ties and a direct-loop oracle") {
  std::mt19937_64 rng(1);
  const num::Tensor zT = random_unit_rows(rng, 5, 6);
  num::Tensor zI = num::Tensor::matrix(1, 6);
  for (std::size_t c = 0; c < 6; ++c) zI.at(0, c) = zT.at(2, c);
  CHECK(predict_fer(zI, zT) == std::vector<int>{2});

  const num::Tensor same = num::Tensor::matrix(4, 6, 0.5f);
  CHECK(predict_fer(random_unit_rows(rng, 3, 6), same) == std::vector<int>{0, 0, 0});

  for (int trial = 0; trial < 20; ++trial) {
    const num::Tensor a = random_unit_rows(rng, 7, 6), t = random_unit_rows(rng, 4, 6);
    const auto pred = predict_fer(a, t);
    num::Tensor scaled = t;
    for (auto& v : scaled.values) v *= 3.5f;
    CHECK(predict_fer(a, scaled) == pred);
    for (std::size_t i = 0; i < 7; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < 4; ++c)
        if (dot(a, i, t, c) > dot(a, i, t, best)) best = c;
      CHECK(pred[i] == int(best));
    }
  }
  CHECK(kind_of([&] { predict_fer(zI, random_unit_rows(rng, 3, 5)); }) == ErrorKind::SizeMismatch);
}

TEST_CASE("predict_au: threshold boundary, self match and oracle") {
  num::Tensor zI({1, 2}, {1.0f, 0.0f});
  num::Tensor zT({2, 2}, {0.0f, 1.0f, 0.0f, -1.0f});
  CHECK(predict_au(zI, zT, 0.07f) == std::vector<std::uint8_t>{1, 1});

  std::mt19937_64 rng(2);
  const num::Tensor t = random_unit_rows(rng, 5, 4);
  for (float tau : {0.01f, 1.0f, 50.0f}) {
    for (std::size_t c = 0; c < 5; ++c) {
      num::Tensor row = num::Tensor::matrix(1, 4);
      for (std::size_t k = 0; k < 4; ++k) row.at(0, k) = t.at(c, k);
      CHECK(predict_au(row, t, tau)[c] == 1);
    }
  }
  for (int trial = 0; trial < 10; ++trial) {
    const num::Tensor a = random_unit_rows(rng, 6, 4);
    const float tau = 0.1f, thr = 0.7f;
    const auto pred = predict_au(a, t, tau, thr);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t c = 0; c < 5; ++c) {
        const double p = 1.0 / (1.0 + std::exp(-dot(a, i, t, c) / tau));
        CHECK(pred[i * 5 + c] == (p >= thr ? 1 : 0));
      }
  }
  CHECK(kind_of([&] { predict_au(zI, zT, 0.0f); }) == ErrorKind::BadTemperature);
}

TEST_CASE("f1 scores") {
  const std::vector<std::uint8_t> truth = {1, 0, 0, 1, 1, 0};
  const F1Result perfect = f1_scores(truth, truth, 2);
  CHECK(perfect.per_class == std::vector<float>{1.0f, 1.0f});
  CHECK(perfect.macro == 1.0f);

  // One class with TP=2, FP=1, FN=1.
  const std::vector<std::uint8_t> t1 = {1, 1, 1, 0, 0};
  const std::vector<std::uint8_t> p1 = {1, 1, 0, 1, 0};
  CHECK(f1_scores(p1, t1, 1).per_class[0] == doctest::Approx(2.0 / 3.0));

  const std::vector<std::uint8_t> none = {0, 0, 0, 0};
  CHECK(f1_scores(none, none, 2).per_class == std::vector<float>{1.0f, 1.0f});
  CHECK(f1_scores(none, none, 2, 0.0f).macro == 0.0f);

  std::mt19937_64 rng(5);
  std::bernoulli_distribution coin(0.4);
  std::vector<std::uint8_t> p(60), t(60);
  for (std::size_t i = 0; i < 60; ++i) {
    p[i] = coin(rng);
    t[i] = coin(rng);
  }
  const F1Result r = f1_scores(p, t, 6);
  double mean = 0.0;
  for (float f : r.per_class) {
    CHECK(f >= 0.0f);
    CHECK(f <= 1.0f);
    mean += f;
  }
  CHECK(r.macro == doctest::Approx(mean / 6).epsilon(1e-6));

  CHECK(kind_of([&] { f1_scores(p1, t, 1); }) == ErrorKind::ShapeMismatch);
  const std::vector<std::uint8_t> two = {2, 0};
  CHECK(kind_of([&] { f1_scores(two, two, 2); }) == ErrorKind::TargetNotBinary);
}

TEST_CASE("accuracy") {
  const std::vector<int> t = {0, 1, 2, 3};
  CHECK(accuracy(t, t) == 1.0f);
  CHECK(accuracy(std::vector<int>{1, 2, 3, 0}, t) == 0.0f);
  CHECK(accuracy(std::vector<int>{0, 1, 2, 0}, t) == 0.75f);
  CHECK(kind_of([] { accuracy(std::vector<int>{}, std::vector<int>{}); }) == ErrorKind::EmptyInput);
}

TEST_CASE("reports score FER and AUR datasets") {
  data::SynthConfig sc;
  sc.samples_per_activity = 3;
  const data::Dataset ds = data::generate_synthetic(sc);
  std::vector<int> pred;
  for (const auto& s : ds.samples) pred.push_back(s.target_class);
  const auto names = std::vector<std::string>(ds.n_classes, "c");
  EvalReport r = report_from_predictions(ds, pred, {}, names);
  CHECK(r.accuracy == 1.0f);
  CHECK(r.n_samples == ds.size());
  std::size_t diag = 0;
  for (std::size_t c = 0; c < ds.n_classes; ++c) diag += r.confusion[c][c];
  CHECK(diag == ds.size());
  const auto j = r.to_json();
  CHECK(j.at("task") == "fer");
  CHECK(j.at("per_class_f1").size() == ds.n_classes);
  CHECK(r.f1_csv().rfind("class,f1\nc,1.000000\n", 0) == 0);

  sc.task = data::Task::Aur;
  const data::Dataset au = data::generate_synthetic(sc);
  std::vector<std::uint8_t> hot;
  for (const auto& s : au.samples) hot.insert(hot.end(), s.target_multi.begin(), s.target_multi.end());
  EvalReport ra = report_from_predictions(au, {}, hot, std::vector<std::string>(au.n_classes, "a"));
  CHECK(ra.macro_f1 == 1.0f);
  CHECK(ra.accuracy == 1.0f);
  CHECK(ra.confusion.size() == au.n_classes);
}

TEST_CASE("evaluate and zero-shot guards on an untrained model") {
  model::ModelParams params = model::init_params(tiny_arch(), 3);
  data::SynthConfig sc;
  sc.samples_per_activity = 5;
  const data::Dataset ds = data::generate_synthetic(sc);
  const auto labels = data::synthetic_labels(sc);
  const auto desc = text::bundled_templates(text::TemplateKind::FeDescription);

  for (const char* mode : {"names", "descriptions"}) {
    EvalReport r = evaluate(params, mode, ds, labels, desc);
    CHECK(r.n_samples == ds.size());
    CHECK(r.fingerprint == params.arch.fingerprint());
  }
  CHECK(kind_of([&] { evaluate(params, "head", ds, labels, desc); }) == ErrorKind::ArchMismatch);
  CHECK(kind_of([&] { evaluate(params, "guess", ds, labels, desc); }) == ErrorKind::ConfigError);

  std::vector<std::string> seen = {labels[0].name, labels[1].name, labels[2].name};
  const data::Dataset unseen = data::select_classes(ds, {3, 4, 5, 6});
  const std::vector<text::Label> unseen_labels(labels.begin() + 3, labels.begin() + 7);
  CHECK_NOTHROW(zero_shot_eval(params, unseen, unseen_labels, seen, desc));
  seen.push_back(labels[4].name);
  CHECK(kind_of([&] { zero_shot_eval(params, unseen, unseen_labels, seen, desc); }) == ErrorKind::ClassOverlap);
  seen.pop_back();

  SUBCASE("single unseen class") {
    const data::Dataset one = data::select_classes(ds, {5});
    EvalReport r = zero_shot_eval(params, one, {labels[5]}, seen, desc);
    CHECK(r.accuracy == 1.0f);
  }
  SUBCASE("indistinguishable descriptions fall back to the tie rule") {
    auto same = unseen_labels;
    for (auto& l : same) l.description = unseen_labels[0].description;
    EvalReport r = zero_shot_eval(params, unseen, same, seen, desc);
    std::size_t first = 0;
    for (const auto& s : unseen.samples) first += s.target_class == 0;
    CHECK(r.accuracy == doctest::Approx(double(first) / double(unseen.size())));
  }
}

TEST_CASE("linear probe") {
  std::mt19937_64 rng(8);
  SUBCASE("constant labels") {
    const num::Tensor x = clef::testing::random_tensor(rng, {30, 4});
    CHECK(linear_probe(x, std::vector<int>(30, 7)) == 1.0f);
  }
  SUBCASE("one-hot embeddings") {
    num::Tensor x = num::Tensor::matrix(60, 4);
    std::vector<int> y(60);
    for (std::size_t i = 0; i < 60; ++i) {
      y[i] = int(i % 4);
      x.at(i, i % 4) = 1.0f;
    }
    CHECK(linear_probe(x, y) == 1.0f);
  }
  SUBCASE("random labels on random embeddings sit near chance") {
    double mean = 0.0;
    const int seeds = 8;
    for (int s = 0; s < seeds; ++s) {
      const num::Tensor x = clef::testing::random_tensor(rng, {240, 8});
      std::vector<int> y(240);
      std::uniform_int_distribution<int> pick(0, 3);
      for (auto& v : y) v = pick(rng);
      mean += linear_probe(x, y, {.seed = std::uint64_t(s)});
    }
    CHECK(std::abs(mean / seeds - 0.25) < 0.05);
  }
  SUBCASE("too few samples") {
    const num::Tensor x = clef::testing::random_tensor(rng, {19, 3});
    std::vector<int> y(19);
    for (std::size_t i = 0; i < 19; ++i) y[i] = int(i % 2);
    CHECK(kind_of([&] { linear_probe(x, y); }) == ErrorKind::TooFewSamples);
  }
}
