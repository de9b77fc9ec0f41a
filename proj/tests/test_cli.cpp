#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "bake/error.hpp"
#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = bake::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

std::vector<std::string> fields(const std::string& line, char sep = '\t') {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string f; std::getline(in, f, sep);) out.push_back(f);
  return out;
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("bake_cli_test_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

const std::vector<std::string> kSmall{"--classes", "3",      "--per-class", "12",         "--dim",    "4",
                                      "--hidden",  "8",      "--n-hat",     "6",          "--epochs", "2",
                                      "--schedule", "cosine:1"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

void check_one_line_error(const Run& r) {
  CHECK(!r.err.empty());
  CHECK(r.err.find('\n') == r.err.size() - 1);
}

}  // namespace

TEST_CASE("help lists the defaults") {
  const Run r = run({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("--lambda FLOAT [1]") != std::string::npos);
  CHECK(r.out.find("--tau FLOAT [4]") != std::string::npos);
  CHECK(r.out.find("--omega TEXT [0.5]") != std::string::npos);
  CHECK(r.out.find("--m UINT [1]") != std::string::npos);
  CHECK(r.out.find("compare") != std::string::npos);
  CHECK(r.out.find("targets") != std::string::npos);
  CHECK(run({"train", "--help"}).code == 0);
}

TEST_CASE("exit codes") {
  TempDir tmp;
  SUBCASE("configuration errors exit 2") {
    for (const auto& bad : std::vector<std::vector<std::string>>{
             {"train", "--omega", "1.5"},
             {"train", "--omega", "1", "--mode", "closed"},
             {"train", "--mode", "sideways"},
             {"train", "--no-such-flag"},
             {"train", "--method", "kd"},
             {"train", "--config", tmp / "missing.json"},
             {"compare", "--method", ","},
         }) {
      const Run r = run(with(bad, {"--out-dir", tmp / "x"}));
      CHECK(r.code == bake::cli::kExitConfig);
      check_one_line_error(r);
    }
    const Run r = run({"train", "--omega", "1.5"});
    CHECK(r.err.find("omega") != std::string::npos);
  }
  SUBCASE("unknown config keys exit 2") {
    std::ofstream(tmp / "bad.json") << R"({"epochs": 1, "colour": "red"})";
    const Run r = run({"train", "--config", tmp / "bad.json"});
    CHECK(r.code == bake::cli::kExitConfig);
    CHECK(r.err.find("colour") != std::string::npos);
  }
  SUBCASE("data errors exit 3") {
    Run r = run({"targets", "--checkpoint", tmp / "nothing.bin"});
    CHECK(r.code == bake::cli::kExitData);
    check_one_line_error(r);
    r = run({"train", "--dataset", "idx", "--train-images", tmp / "a", "--train-labels", tmp / "b", "--test-images",
             tmp / "c", "--test-labels", tmp / "d", "--out-dir", tmp / "x"});
    CHECK(r.code == bake::cli::kExitData);
    check_one_line_error(r);
  }
  SUBCASE("a bad thread cap exits 2") {
    ::setenv("BAKE_KIT_THREADS", "0", 1);
    const Run r = run(with({"train", "--out-dir", tmp / "x"}, kSmall));
    ::unsetenv("BAKE_KIT_THREADS");
    CHECK(r.code == bake::cli::kExitConfig);
    CHECK(r.err.find("BAKE_KIT_THREADS") != std::string::npos);
  }
}

TEST_CASE("train writes its outputs and is reproducible") {
  TempDir tmp;
  const Run a = run(with({"train", "--out-dir", tmp / "a"}, kSmall));
  REQUIRE(a.code == 0);
  for (const char* name : {"manifest.json", "metrics.jsonl", "timing.jsonl", "model.bin"})
    CHECK(fs::exists(tmp.path / "a" / name));
  const auto metrics = lines_of(slurp(tmp.path / "a" / "metrics.jsonl"));
  REQUIRE(metrics.size() == 2);
  for (const char* key : {"\"epoch\"", "\"train_loss\"", "\"train_ce\"", "\"train_kl\"", "\"test_top1\"", "\"test_top5\""})
    CHECK(metrics[0].find(key) != std::string::npos);
  CHECK(metrics[0].find("seconds") == std::string::npos);

  REQUIRE(run(with({"train", "--out-dir", tmp / "b"}, kSmall)).code == 0);
  CHECK(slurp(tmp.path / "a" / "metrics.jsonl") == slurp(tmp.path / "b" / "metrics.jsonl"));
  CHECK(slurp(tmp.path / "a" / "model.bin") == slurp(tmp.path / "b" / "model.bin"));

  REQUIRE(run({"train", "--config", tmp / "a/manifest.json", "--out-dir", tmp / "c"}).code == 0);
  CHECK(slurp(tmp.path / "a" / "metrics.jsonl") == slurp(tmp.path / "c" / "metrics.jsonl"));

  REQUIRE(run(with({"train", "--out-dir", tmp / "d", "--seed", "1"}, kSmall)).code == 0);
  CHECK(slurp(tmp.path / "a" / "metrics.jsonl") != slurp(tmp.path / "d" / "metrics.jsonl"));
}

TEST_CASE("flags override the config file, which overrides defaults") {
  TempDir tmp;
  std::ofstream(tmp / "cfg.json") << R"({"classes": 3, "per-class": 12, "dim": 4, "hidden": [8], "n-hat": 6,
                                         "epochs": 3, "schedule": "cosine:1", "lambda": 0.25})";
  REQUIRE(run({"train", "--config", tmp / "cfg.json", "--epochs", "1", "--out-dir", tmp / "run"}).code == 0);
  CHECK(lines_of(slurp(tmp.path / "run" / "metrics.jsonl")).size() == 1);
  const std::string manifest = slurp(tmp.path / "run" / "manifest.json");
  CHECK(manifest.find("\"epochs\": 1,") != std::string::npos);
  CHECK(manifest.find("\"lambda\": 0.25,") != std::string::npos);
  CHECK(manifest.find("\"hidden\": 8,") != std::string::npos);
  CHECK(manifest.find("\"tau\": 4") != std::string::npos);
}

TEST_CASE("compare writes one row per method and omega") {
  TempDir tmp;
  const Run r = run(with({"compare", "--method", "vanilla,ls,bake", "--omega", "0.25,0.5", "--seeds", "2", "--out-dir",
                          tmp / "cmp"},
                         kSmall));
  REQUIRE(r.code == 0);
  const auto rows = lines_of(slurp(tmp.path / "cmp" / "summary.tsv"));
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "method\tomega\tseeds\ttop1_mean\ttop1_std\ttop5_mean\ttop5_std");
  CHECK(fields(rows[1])[0] == "vanilla");
  CHECK(fields(rows[1])[1] == "-");
  CHECK(fields(rows[2])[0] == "ls");
  CHECK(fields(rows[3])[1] == "0.25");
  CHECK(fields(rows[4])[1] == "0.50");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto f = fields(rows[i]);
    CHECK(f[2] == "2");
    CHECK(std::stod(f[3]) <= std::stod(f[5]));
  }
  CHECK(fs::exists(tmp.path / "cmp" / "cells" / "bake-omega0.25-seed1.jsonl"));
}

TEST_CASE("targets prints soft targets for one batch") {
  TempDir tmp;
  REQUIRE(run(with({"train", "--out-dir", tmp / "m"}, kSmall)).code == 0);
  const auto common = with({"targets", "--checkpoint", tmp / "m/model.bin", "--split", "train"},
                           {"--classes", "3", "--per-class", "12", "--dim", "4", "--n-hat", "6"});

  SUBCASE("omega 0 returns the model's own tempered predictions") {
    const Run r = run(with(common, {"--omega", "0"}));
    REQUIRE(r.code == 0);
    const auto lines = lines_of(r.out);
    REQUIRE(lines.size() == 2 + 12);
    for (std::size_t i = 2; i < lines.size(); ++i) {
      const auto f = fields(lines[i]);
      CHECK(f[3] == f[4]);
    }
  }
  SUBCASE("printed probabilities are a partial distribution") {
    const Run r = run(with(common, {"--omega", "0.7", "--m", "2", "--n-hat", "3"}));
    REQUIRE(r.code == 0);
    const auto lines = lines_of(r.out);
    REQUIRE(lines.size() == 2 + 9);
    for (std::size_t i = 2; i < lines.size(); ++i) {
      double total = 0.0;
      for (const auto& entry : fields(fields(lines[i])[3], ' ')) {
        const double p = std::stod(entry.substr(entry.find(':') + 1));
        CHECK(p >= 0.0);
        total += p;
      }
      CHECK(total <= 1.0 + 1e-4);
    }
  }
  SUBCASE("a batch index past the end is a configuration error") {
    CHECK(run(with(common, {"--batch", "99"})).code == bake::cli::kExitConfig);
  }
  SUBCASE("a checkpoint for another shape is a data error") {
    CHECK(run(with(common, {"--dim", "5"})).code == bake::cli::kExitData);
  }
}

TEST_CASE("helper examples") {
  CHECK(bake::cli::split_list("a, b,,c") == std::vector<std::string>{"a", "b", "c"});
  CHECK(bake::cli::split_list("").empty());

  const std::vector<double> probs{0.1, 0.4, 0.1, 0.4};
  const auto top = bake::cli::top_k(probs, 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0].first == 1);
  CHECK(top[1].first == 3);
  CHECK(top[2].first == 0);
  CHECK(bake::cli::top_k(probs, 10).size() == 4);

  const auto cos = std::get<bake::CosineSchedule>(bake::cli::parse_schedule("cosine:2.5"));
  CHECK(cos.warmup_epochs == 2.5);
  const auto step = std::get<bake::StepSchedule>(bake::cli::parse_schedule("step:10,20"));
  CHECK(step.milestones == std::vector<int>{10, 20});
  CHECK(bake::cli::to_string(bake::cli::parse_schedule("step:10,20")) == "step:10,20");
  CHECK_THROWS_AS((void)bake::cli::parse_schedule("linear"), bake::ConfigError);
}
