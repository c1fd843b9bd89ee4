#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(METACC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path write_config(const fs::path& dir, const nlohmann::json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump();
  return p;
}

const nlohmann::json kSmall = {{"scenario", "bursty-focused"},
                               {"learners", "fomaml"},
                               {"eval_episodes", 4},
                               {"train_counts", {{"setups", 3}, {"messages", 20}, {"examples", 25}}},
                               {"metrics", {{"codewords", 2}, {"samples", 200}}}};

}  // namespace

TEST_CASE("exit codes") {
  TempDir tmp("metacc_cli_codes");
  CHECK(run("--help") == 0);
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("gen-data --scenario no-such-scenario --out " + tmp.path.string()) == 2);
  CHECK(run("train --scenario mixed --learner maml9 --out " + tmp.path.string()) == 2);
  const fs::path bad = tmp.path / "bad.json";
  std::ofstream(bad) << "{not json";
  CHECK(run("eval --config " + bad.string()) == 2);
  std::ofstream(tmp.path / "unknown.json") << R"({"scenario":"mixed","learners":"erm","bogus":1})";
  CHECK(run("eval --config " + (tmp.path / "unknown.json").string()) == 2);
  CHECK(run("report --results " + (tmp.path / "missing.csv").string()) == 3);
  std::ofstream(tmp.path / "garbage.ckpt") << "garbage";
  CHECK(run("eval --scenario awgn-focused --checkpoint " + (tmp.path / "garbage.ckpt").string()) == 3);
}

TEST_CASE("gen-data and train are byte-identical across repeated runs") {
  TempDir tmp("metacc_cli_determinism");
  const fs::path cfg = write_config(tmp.path, kSmall);
  const fs::path a = tmp.path / "a", b = tmp.path / "b";
  REQUIRE(run("gen-data --config " + cfg.string() + " --seed 7 --out " + a.string()) == 0);
  REQUIRE(run("gen-data --config " + cfg.string() + " --seed 7 --out " + b.string()) == 0);
  const std::string name = "bursty-focused-seed7-meta-train.mcc";
  REQUIRE(fs::exists(a / name));
  CHECK(slurp(a / name) == slurp(b / name));
  CHECK(slurp(a / "bursty-focused-seed7-meta-test-0.mcc") == slurp(b / "bursty-focused-seed7-meta-test-0.mcc"));

  REQUIRE(run("train --config " + cfg.string() + " --seed 7 --iterations 2 --out " + a.string()) == 0);
  REQUIRE(run("train --config " + cfg.string() + " --seed 7 --iterations 2 --out " + b.string()) == 0);
  const std::string ckpt = "fomaml-bursty-focused-seed7.ckpt";
  REQUIRE(fs::exists(a / ckpt));
  CHECK(slurp(a / ckpt) == slurp(b / ckpt));

  REQUIRE(run("train --config " + cfg.string() + " --seed 8 --iterations 2 --out " + b.string()) == 0);
  CHECK(slurp(a / ckpt) != slurp(b / "fomaml-bursty-focused-seed8.ckpt"));

  CHECK(run("eval --config " + cfg.string() + " --checkpoint " + (a / ckpt).string() + " --out " + a.string()) == 0);
  CHECK(fs::exists(a / "results.csv"));
}

TEST_CASE("eval, report and metrics write their outputs") {
  TempDir tmp("metacc_cli_reports");
  nlohmann::json j = kSmall;
  j["learners"] = "viterbi";
  j["seeds"] = {1, 2};
  const fs::path cfg = write_config(tmp.path, j);
  const fs::path out = tmp.path / "run";
  REQUIRE(run("eval --config " + cfg.string() + " --out " + out.string()) == 0);
  CHECK(fs::exists(out / "results.csv"));
  CHECK(fs::exists(out / "summary.json"));
  CHECK(fs::exists(out / "plotdata" / "breadth.csv"));
  const std::string summary = slurp(out / "summary.json");

  fs::remove(out / "summary.json");
  REQUIRE(run("report --results " + (out / "results.csv").string()) == 0);
  CHECK(slurp(out / "summary.json") == summary);

  REQUIRE(run("metrics diversity --config " + cfg.string() + " --codewords 2 --samples 200 --out " + out.string()) ==
          0);
  const auto rows = nlohmann::json::parse(slurp(out / "metrics-diversity.json"));
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].at("estimator") == "ksg");
  CHECK(rows[0].at("M") == 2);
  CHECK(run("metrics entropy --scenario mixed") == 2);
}
