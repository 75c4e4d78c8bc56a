#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "config.hpp"
#include "doctest.h"

using namespace clef;
using namespace clef::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  const fs::path dir = fs::temp_directory_path() / "clef_test_cli";
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::trunc) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct Run {
  int code;
  std::string err;
};

Run run_cli(const std::string& args) {
  const fs::path err = scratch() / "stderr.txt";
  const std::string cmd = std::string(CLEF_CLI_PATH) + " " + args + " > /dev/null 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

std::size_t line_count(const fs::path& p) {
  std::ifstream f(p);
  std::size_t n = 0;
  for (std::string line; std::getline(f, line);) ++n;
  return n;
}

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("precedence: defaults, then CLEF_SEED, then the file, then flags") {
  CHECK(resolve(std::nullopt, {}, nullptr).run.seed == 0);
  CHECK(resolve(std::nullopt, {}, "17").run.seed == 17);
  CHECK(resolve(std::nullopt, {}, "17").synth.seed == 17);

  const fs::path file = scratch() / "p.toml";
  write(file, "seed = 5\n[run]\nlambda = 0.5\nepochs = 3\n[arch]\nembed_dim = 8\n");
  Config c = resolve(file, {}, "17");
  CHECK(c.run.seed == 5);
  CHECK(c.run.lambda == 0.5f);
  CHECK(c.arch.embed_dim == 8);
  CHECK(c.arch_overridden());

  c = resolve(file, {"--seed", "9", "--lambda=4", "--no-names", "--no-shared-text", "--batch-size", "16"}, "17");
  CHECK(c.run.seed == 9);
  CHECK(c.run.lambda == 4.0f);
  CHECK(c.run.epochs == 3);
  CHECK_FALSE(c.run.use_names);
  CHECK_FALSE(c.arch.share_text_encoder);
  CHECK(c.run.batch_size == 16);
  CHECK_FALSE(resolve(std::nullopt, {"--seed", "1"}, nullptr).arch_overridden());
}

TEST_CASE("unknown keys and bad values name the key") {
  CHECK(message_of([] { resolve(std::nullopt, {"--lamda", "2"}, nullptr); }).find("'lamda'") != std::string::npos);
  CHECK(message_of([] { resolve(std::nullopt, {"--epochs", "-1"}, nullptr); }).find("'epochs'") != std::string::npos);
  CHECK(message_of([] { resolve(std::nullopt, {"--task", "pose"}, nullptr); }).find("'task'") != std::string::npos);
  CHECK(message_of([] { resolve(std::nullopt, {"--lr"}, nullptr); }).find("'lr'") != std::string::npos);
  CHECK(message_of([] { resolve(std::nullopt, {}, "abc"); }).find("CLEF_SEED") != std::string::npos);

  const fs::path file = scratch() / "bad.toml";
  write(file, "[run]\nwidth = 3\n");
  CHECK(message_of([&] { resolve(file, {}, nullptr); }).find("'width'") != std::string::npos);
  write(file, "colour = 3\n");
  CHECK(message_of([&] { resolve(file, {}, nullptr); }).find("'colour'") != std::string::npos);
  write(file, "lambda = [\n");
  CHECK(message_of([&] { resolve(file, {}, nullptr); }).find("ConfigError") != std::string::npos);
}

TEST_CASE("echoed config resolves to the same config") {
  Config c = resolve(std::nullopt,
                     {"--lr", "3e-4", "--lambda", "0.7", "--classes", "0,1,2", "--out", "runs/a \"quoted\"",
                      "--test-fraction", "0.15", "--task", "aur", "--min-lr", "1e-7"},
                     nullptr);
  const fs::path file = scratch() / "echo.toml";
  write(file, to_toml(c));
  const Config back = resolve(file, {}, nullptr);
  for (const auto& k : registry()) CHECK_MESSAGE(get_key(back, k.name) == get_key(c, k.name), k.name);
  CHECK(back.run.lr == 3e-4f);
  CHECK(back.classes == std::vector<int>{0, 1, 2});
  CHECK(back.out == "runs/a \"quoted\"");
  CHECK(to_toml(back) == to_toml(c));
}

TEST_CASE("exit codes") {
  CHECK(exit_code(ErrorKind::ConfigError) == 1);
  CHECK(exit_code(ErrorKind::ArchMismatch) == 1);
  CHECK(exit_code(ErrorKind::IoError) == 2);
  CHECK(exit_code(ErrorKind::NonFinite) == 2);
}

TEST_CASE("command line: gen-data, grad-check and guarded eval") {
  const fs::path dir = scratch();
  const fs::path data = dir / "d.jsonl";
  REQUIRE(run_cli("gen-data --out " + data.string() + " --samples-per-activity 5 --n-activities 4").code == 0);
  CHECK(line_count(data) == 20);
  CHECK(fs::exists(dir / "d.train.jsonl"));
  CHECK(fs::exists(dir / "d.labels.jsonl"));
  CHECK(line_count(dir / "d.train.jsonl") + line_count(dir / "d.test.jsonl") == 20);

  const Run unknown = run_cli("gen-data --out " + data.string() + " --sampels 3");
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("'sampels'") != std::string::npos);
  CHECK(std::count(unknown.err.begin(), unknown.err.end(), '\n') == 1);

  CHECK(run_cli("grad-check --loss supcon --loss finetune").code == 0);

  const std::string tiny = " --width 16 --layers 1 --text-width 16 --text-layers 1 --embed-dim 8 --epochs 1 --batch-size 8";
  REQUIRE(run_cli("finetune --data " + data.string() + " --out " + (dir / "ft").string() + tiny).code == 0);
  for (const char* f : {"config.toml", "loss.csv", "checkpoint.clef"}) CHECK(fs::exists(dir / "ft" / f));
  const std::string ckpt = (dir / "ft" / "checkpoint.clef").string();
  CHECK(run_cli("eval --ckpt " + ckpt + " --data " + data.string() + " --report " + (dir / "r.json").string()).code == 0);
  CHECK(fs::exists(dir / "r.json"));
  CHECK(fs::exists(dir / "r.f1.csv"));

  const Run mismatch = run_cli("eval --ckpt " + ckpt + " --data " + data.string() + " --embed-dim 32");
  CHECK(mismatch.code == 1);
  CHECK(mismatch.err.find("ArchMismatch") != std::string::npos);

  CHECK(run_cli("eval --ckpt " + (dir / "none.clef").string() + " --data " + data.string()).code == 2);

  // The echoed config repeats the run byte for byte.
  const fs::path again = dir / "ft2";
  REQUIRE(run_cli("finetune --config " + (dir / "ft" / "config.toml").string() + " --out " + again.string()).code == 0);
  CHECK(slurp(again / "checkpoint.clef") == slurp(dir / "ft" / "checkpoint.clef"));
  CHECK(slurp(again / "loss.csv") == slurp(dir / "ft" / "loss.csv"));
}
