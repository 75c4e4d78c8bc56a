#include <map>
#include <random>
#include <string>
#include <vector>

#include "clef/error.hpp"
#include "clef/text/prompts.hpp"
#include "clef/text/tokenizer.hpp"
#include "doctest.h"

using namespace clef;
using namespace clef::text;

TEST_CASE("label-name prompts") {
  const TemplateSet names = bundled_templates(TemplateKind::LabelName);
  REQUIRE(names.size() == 1);
  CHECK(render_prompt(names, 0, "happiness") == "a photo of a person with happiness.");
  CHECK(render_prompt(names, 0, "inner brow raiser") == "a photo of a person with inner brow raiser.");
  CHECK(render_prompt(names, 0, "Inner Brow Raiser") == "a photo of a person with inner brow raiser.");
}

TEST_CASE("activity prompt renders a BP4D activity verbatim") {
  const TemplateSet acts = bundled_templates(TemplateKind::ActivityDescription);
  CHECK(render_prompt(acts, 0,
                      "Talk to the experimenter and listen to a joke (Interview). The target emotion is happiness "
                      "or amusement") ==
        "a photo of a person from an activity that talk to the experimenter and listen to a joke (interview). the "
        "target emotion is happiness or amusement.");
}

TEST_CASE("bundled template sets have the shipped sizes and one placeholder each") {
  CHECK(bundled_templates(TemplateKind::AuDescription).size() == 14);
  CHECK(bundled_templates(TemplateKind::FeDescription).size() == 11);
  CHECK(bundled_templates(TemplateKind::ActivityDescription).size() == 12);
  CHECK_THROWS_AS(make_template_set(TemplateKind::FeDescription, {"no placeholder"}), Error);
  CHECK_THROWS_AS(make_template_set(TemplateKind::FeDescription, {"{} twice {}"}), Error);
  CHECK_THROWS_AS(make_template_set(TemplateKind::LabelName, {"a face with {}."}), Error);
}

TEST_CASE("render_prompt rejects bad indices") {
  const TemplateSet names = bundled_templates(TemplateKind::LabelName);
  try {
    render_prompt(names, 1, "x");
    FAIL("expected IndexOutOfRange");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::IndexOutOfRange);
  }
}

TEST_CASE("sample_template") {
  std::mt19937_64 rng(1);
  const TemplateSet names = bundled_templates(TemplateKind::LabelName);
  for (int i = 0; i < 100; ++i) CHECK(sample_template(names, rng) == 0);

  const TemplateSet fe = bundled_templates(TemplateKind::FeDescription);
  REQUIRE(fe.size() == 11);
  std::vector<int> counts(11, 0);
  std::mt19937_64 r2(99);
  for (int i = 0; i < 11000; ++i) ++counts[sample_template(fe, r2)];
  double chi2 = 0.0;
  for (int c : counts) {
    CHECK(c >= 850);
    CHECK(c <= 1150);
    chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
  }
  // 99.9th percentile of chi-square with 10 degrees of freedom.
  CHECK(chi2 < 29.59);

  std::mt19937_64 a(5), b(5);
  for (int i = 0; i < 50; ++i) CHECK(sample_template(fe, a) == sample_template(fe, b));

  TemplateSet empty{TemplateKind::FeDescription, {}};
  CHECK_THROWS_AS(sample_template(empty, a), Error);
}

TEST_CASE("tokenize edge cases") {
  const TokenizedText empty = tokenize("", 8);
  CHECK(empty.ids == std::vector<std::int32_t>{kBosId, kEosId, kPadId, kPadId, kPadId, kPadId, kPadId, kPadId});
  CHECK(empty.true_len == 2);
  CHECK(empty.end_index == 1);

  const TokenizedText twice = tokenize("smile smile", 8);
  CHECK(twice.ids[1] == twice.ids[2]);
  CHECK(twice.ids[1] >= 3);
  CHECK(twice.true_len == 4);

  std::string long_text;
  for (int i = 0; i < 100; ++i) long_text += "word" + std::to_string(i) + " ";
  const TokenizedText trunc = tokenize(long_text, 32);
  CHECK(trunc.ids.size() == 32);
  CHECK(trunc.true_len == 32);
  CHECK(trunc.ids.back() == kEosId);
  CHECK(trunc.end_index == 31);
}

TEST_CASE("tokenize lowercases and splits on punctuation") {
  CHECK(tokenize("The Brows, RAISED.") == tokenize("the brows raised"));
  for (std::int32_t id : tokenize("a photo of a person with fear.", 16, 64).ids) {
    CHECK(id >= 0);
    CHECK(id < 64);
  }
}

TEST_CASE("render then tokenize is deterministic") {
  const TemplateSet fe = bundled_templates(TemplateKind::FeDescription);
  std::mt19937_64 a(17), b(17);
  for (int i = 0; i < 20; ++i) {
    const auto ta = tokenize(render_prompt(fe, sample_template(fe, a), "the eyebrows are raised"));
    const auto tb = tokenize(render_prompt(fe, sample_template(fe, b), "the eyebrows are raised"));
    CHECK(ta == tb);
  }
}

TEST_CASE("shipped label vocabularies tokenize without name collisions") {
  for (const char* file : {"fe_labels.jsonl", "au_labels.jsonl"}) {
    const auto labels = load_labels(data_dir() / "labels" / file);
    std::vector<std::string> names;
    std::vector<std::string> all_text;
    for (const auto& l : labels) {
      names.push_back(l.name);
      all_text.push_back(l.name);
      all_text.push_back(l.description);
    }
    const CollisionReport names_report = measure_collisions(names);
    MESSAGE(file << ": name pair collision rate " << names_report.pair_rate() << ", word collision rate "
                 << measure_collisions(all_text).word_rate());
    CHECK(names_report.pair_rate() < 0.01);
  }
  CHECK(load_labels(data_dir() / "labels" / "fe_labels.jsonl").size() == 8);
  CHECK(load_labels(data_dir() / "labels" / "au_labels.jsonl").size() == 15);
}
