#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = ETHIDENT_CLI_PATH;

struct Workdir {
  fs::path path;
  Workdir() : path(fs::temp_directory_path() / ("ethident_cli_test_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Workdir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

int run(const std::string& args, const std::string& err_file = "/dev/null") {
  const auto cmd = kCli + " " + args + " > /dev/null 2> " + err_file;
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("pipeline commands") {
  Workdir w;
  REQUIRE(run("--seed 3 gen --out-dir " + w.path.string() + " --per-class 15 --background-accounts 300 --background-tx 900") == 0);
  CHECK(fs::exists(w / "records.csv"));
  CHECK(fs::exists(w / "labels.csv"));
  REQUIRE(run("build --records " + (w / "records.csv") + " --out " + (w / "g.lwaig")) == 0);

  REQUIRE(run("sample --graph " + (w / "g.lwaig") + " --labels " + (w / "labels.csv") +
              " --strategies 'amount|times|avgAmount' --hops 1 --fanout 4 --name Eth --out-dir " + w.path.string()) == 0);
  for (const char* suffix : {"-A", "-T", "-aA"}) {
    INFO(suffix);
    CHECK(fs::exists(w / (std::string("Eth") + suffix + "/meta.json")));
  }
  const auto meta = json::parse(slurp(w / "Eth-T/meta.json"));
  CHECK(meta["strategy"] == "times");
  CHECK(meta["K"] == 4);

  REQUIRE(run("sample --graph " + (w / "g.lwaig") + " --labels " + (w / "labels.csv") +
              " --positive phish --name Phish --out-dir " + w.path.string()) == 0);
  const auto binary = json::parse(slurp(w / "Phish-A/meta.json"));
  CHECK(binary["classes"].size() == 2);
  CHECK(binary["count"] == 30);

  REQUIRE(run("--seed 3 train --dataset " + (w / "Eth-A") + " --out-dir " + (w / "wo") +
              " --lambda 0 --aug identity,identity --epochs 2 --hidden 8 --repeats 1") == 0);
  const auto metrics = json::parse(slurp(w / "wo/metrics.json"));
  for (const char* key : {"dataset", "strategy", "config", "folds", "mean_f1", "std_f1"}) CHECK(metrics.contains(key));
  CHECK(metrics["folds"].size() == 3);
  CHECK(metrics["config"]["lambda"] == "0");
  CHECK(metrics["config"]["K"] == "4");
  CHECK(fs::exists(w / "wo/history.jsonl"));

  REQUIRE(run("eval --checkpoint " + (w / "wo/model.ckpt") + " --dataset " + (w / "Eth-A") + " --out " + (w / "eval.json")) == 0);
  const auto ev = json::parse(slurp(w / "eval.json"));
  CHECK(ev["mean_f1"].get<double>() >= 0.0);

  REQUIRE(run("embed --checkpoint " + (w / "wo/model.ckpt") + " --dataset " + (w / "Eth-A") + " --out " + (w / "emb.csv")) == 0);
  std::istringstream emb(slurp(w / "emb.csv"));
  std::string header;
  std::getline(emb, header);
  CHECK(header.rfind("subgraph,g0,g1", 0) == 0);
  std::size_t rows = 0;
  for (std::string line; std::getline(emb, line);) ++rows;
  CHECK(rows == 60);

  REQUIRE(run("features --records " + (w / "records.csv") + " --labels " + (w / "labels.csv") + " --out " + (w / "f.csv")) == 0);
  REQUIRE(run("baseline --features " + (w / "f.csv") + " --out " + (w / "lr.json") + " --repeats 1") == 0);
  const auto lr = json::parse(slurp(w / "lr.json"));
  MESSAGE("manual+LR micro-F1 " << lr["mean_f1"]);
  CHECK(lr["mean_f1"].get<double>() > 0.5);  // four balanced classes, chance is 0.25
}

TEST_CASE("errors are reported as json with a row") {
  Workdir w;
  {
    std::ofstream out(w / "bad.csv");
    out << "blockNumber,timestamp,from,to,fromIsContract,toIsContract,callingFunction,value\n"
        << "1,100,0xa,0xb,0,0,,5\n"
        << "2,100,0xa,0xb,0,0,,-3\n";
  }
  CHECK(run("build --records " + (w / "bad.csv") + " --out " + (w / "g"), w / "err.txt") == 1);
  const auto report = json::parse(slurp(w / "err.txt"));
  CHECK(report["row"] == 3);
  CHECK(report.contains("error"));
  CHECK(report.contains("message"));

  {
    std::ofstream out(w / "cfg.txt");
    out << "tau=0\n";
  }
  CHECK(run("--config " + (w / "cfg.txt") + " train --dataset " + w.path.string() + " --out-dir " + (w / "o"),
            w / "err2.txt") == 1);
  CHECK(json::parse(slurp(w / "err2.txt"))["error"] == "Config");
  CHECK(run("bogus") != 0);
}
