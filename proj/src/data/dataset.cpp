#include "clef/data/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "clef/error.hpp"
#include "json.hpp"

namespace clef::data {

using nlohmann::json;

std::string to_string(Task task) { return task == Task::Fer ? "fer" : "aur"; }

Task parse_task(const std::string& s) {
  if (s == "fer") return Task::Fer;
  if (s == "aur") return Task::Aur;
  fail(ErrorKind::ConfigError, "task must be fer or aur, got '" + s + "'");
}

void validate(const Dataset& ds) {
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    const std::string where = "sample " + std::to_string(i) + " (" + s.id + ")";
    if (s.image.size() != ds.height * ds.width) fail(ErrorKind::SchemaError, where + ": image dims");
    for (float p : s.image) {
      if (!(p >= 0.0f && p <= 1.0f)) fail(ErrorKind::SchemaError, where + ": pixel outside [0,1]");
    }
    if (ds.task == Task::Fer) {
      if (s.target_class < 0 || static_cast<std::size_t>(s.target_class) >= ds.n_classes) {
        fail(ErrorKind::SchemaError, where + ": target class out of range");
      }
    } else {
      if (s.target_multi.size() != ds.n_classes) fail(ErrorKind::SchemaError, where + ": target length");
      for (auto v : s.target_multi) {
        if (v > 1) fail(ErrorKind::SchemaError, where + ": target not binary");
      }
    }
  }
}

void save_jsonl(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  for (const Sample& s : ds.samples) {
    json image = json::array();
    for (std::size_t r = 0; r < ds.height; ++r) {
      json row = json::array();
      for (std::size_t c = 0; c < ds.width; ++c) row.push_back(s.image[r * ds.width + c]);
      image.push_back(std::move(row));
    }
    json j{{"id", s.id},
           {"image", std::move(image)},
           {"identity", s.identity},
           {"activity", s.activity},
           {"activity_text", s.activity_text}};
    if (ds.task == Task::Fer) {
      j["target"] = s.target_class;
    } else {
      json t = json::array();
      for (auto v : s.target_multi) t.push_back(static_cast<int>(v));
      j["target"] = std::move(t);
    }
    out << j.dump() << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "short write to " + path.string());
}

namespace {

[[noreturn]] void schema(std::size_t line_no, const std::string& field) {
  fail(ErrorKind::SchemaError, "line " + std::to_string(line_no) + ": field '" + field + "'");
}

int get_int(const json& j, const char* field, std::size_t line_no) {
  if (!j.contains(field) || !j[field].is_number_integer()) schema(line_no, field);
  return j[field].get<int>();
}

}  // namespace

Dataset load_jsonl(const std::filesystem::path& path, std::optional<std::size_t> n_classes) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  Dataset ds;
  bool first = true;
  int max_class = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object()) schema(line_no, "<object>");
    Sample s;
    if (!j.contains("id") || !j["id"].is_string()) schema(line_no, "id");
    s.id = j["id"].get<std::string>();
    s.identity = get_int(j, "identity", line_no);
    s.activity = get_int(j, "activity", line_no);
    if (!j.contains("activity_text") || !j["activity_text"].is_string()) schema(line_no, "activity_text");
    s.activity_text = j["activity_text"].get<std::string>();

    if (!j.contains("image") || !j["image"].is_array() || j["image"].empty()) schema(line_no, "image");
    const json& img = j["image"];
    const std::size_t h = img.size();
    const std::size_t w = img[0].is_array() ? img[0].size() : 0;
    if (w == 0) schema(line_no, "image");
    for (const json& row : img) {
      if (!row.is_array() || row.size() != w) schema(line_no, "image");
      for (const json& p : row) {
        if (!p.is_number()) schema(line_no, "image");
        const float v = p.get<float>();
        if (!(v >= 0.0f && v <= 1.0f)) schema(line_no, "image");
        s.image.push_back(v);
      }
    }

    if (!j.contains("target")) schema(line_no, "target");
    const json& t = j["target"];
    const Task task = t.is_array() ? Task::Aur : Task::Fer;
    if (first) {
      ds.height = h;
      ds.width = w;
      ds.task = task;
      if (task == Task::Aur) ds.n_classes = t.size();
    } else if (h != ds.height || w != ds.width) {
      schema(line_no, "image");
    } else if (task != ds.task) {
      schema(line_no, "target");
    }
    if (task == Task::Fer) {
      if (!t.is_number_integer() || t.get<int>() < 0) schema(line_no, "target");
      s.target_class = t.get<int>();
      if (n_classes && static_cast<std::size_t>(s.target_class) >= *n_classes) schema(line_no, "target");
      max_class = std::max(max_class, s.target_class);
    } else {
      if (t.size() != ds.n_classes || (n_classes && t.size() != *n_classes)) schema(line_no, "target");
      for (const json& v : t) {
        if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) schema(line_no, "target");
        s.target_multi.push_back(static_cast<std::uint8_t>(v.get<int>()));
      }
    }
    first = false;
    ds.samples.push_back(std::move(s));
  }
  if (ds.task == Task::Fer) ds.n_classes = n_classes ? *n_classes : static_cast<std::size_t>(max_class + 1);
  if (ds.task == Task::Aur && n_classes) ds.n_classes = *n_classes;
  return ds;
}

Split split_by_identity(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) fail(ErrorKind::ConfigError, "test_fraction must be in [0,1)");
  std::set<int> ids;
  for (const auto& s : ds.samples) ids.insert(s.identity);
  std::vector<int> order(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * double(order.size())));
  const std::set<int> test_ids(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));

  Split split;
  split.train = Dataset{ds.height, ds.width, ds.task, ds.n_classes, {}};
  split.test = split.train;
  for (const auto& s : ds.samples) (test_ids.count(s.identity) ? split.test : split.train).samples.push_back(s);
  return split;
}

Dataset select_classes(const Dataset& ds, const std::vector<int>& classes) {
  if (ds.task != Task::Fer) fail(ErrorKind::ConfigError, "class selection applies to FER datasets");
  Dataset out{ds.height, ds.width, ds.task, classes.size(), {}};
  for (const auto& s : ds.samples) {
    auto it = std::find(classes.begin(), classes.end(), s.target_class);
    if (it == classes.end()) continue;
    Sample copy = s;
    copy.target_class = static_cast<int>(it - classes.begin());
    out.samples.push_back(std::move(copy));
  }
  return out;
}

}  // namespace clef::data
