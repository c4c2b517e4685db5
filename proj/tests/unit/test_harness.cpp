#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "drm/harness.hpp"
#include "drm/rng.hpp"

using namespace drm;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const char* tag) {
  const auto dir = fs::temp_directory_path() / (std::string("drm_test_") + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

// CSV rows with the wall-clock column dropped.
std::vector<std::string> csv_without_ms(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line)) {
    const auto cut = line.rfind(',');
    rows.push_back(line.substr(0, cut));
  }
  return rows;
}

}  // namespace

TEST_CASE("config parsing, sections, and round trips") {
  const std::string text =
      "# portfolio experiment\n"
      "task = portfolio\n"
      "seed = 7\n"
      "[run]\n"
      "algo = hybrid\n"
      "iters = 1000\n"
      "[model]\n"
      "distortion = cvar:0.7\n";
  const Config cfg = Config::from_string(text);
  CHECK(cfg.get("task") == "portfolio");
  CHECK(cfg.get("run.algo") == "hybrid");
  CHECK(cfg.integer_or("run.iters", 0) == 1000);
  CHECK(cfg.num_or("seed", 0) == 7.0);
  CHECK(cfg.get_or("missing", "x") == "x");

  const Config again = Config::from_string(cfg.serialize());
  CHECK(again == cfg);

  CHECK_THROWS_WITH_AS(cfg.get("nope"), "config: missing key 'nope'", std::invalid_argument);
  CHECK_THROWS_AS(Config::from_string("key_without_value\n"), std::invalid_argument);
  Config bad;
  bad.set("x", "abc");
  CHECK_THROWS_AS(bad.num("x"), std::invalid_argument);
}

TEST_CASE("rate_slope on synthetic curves") {
  std::vector<double> ks, mse, flat;
  for (int i = 0; i < 20; ++i) {
    const double k = 100.0 * std::pow(1.5, i);
    ks.push_back(k);
    mse.push_back(3.7 * std::pow(k, -0.7));
    flat.push_back(2.0);
  }
  CHECK(rate_slope(ks, mse, 0.0, 1e12) == doctest::Approx(-0.7).epsilon(1e-9));
  CHECK(rate_slope(ks, flat, 0.0, 1e12) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(rate_slope(ks, mse, 1e11, 1e12), std::invalid_argument);
}

TEST_CASE("aggregate bands contain the mean") {
  Rng rng(131);
  std::vector<RunHistory> runs(7);
  for (auto& run : runs) {
    for (int i = 0; i < 5; ++i) {
      RunRecord rec;
      rec.k = i * 100;
      rec.drm = rng.normal();
      rec.w2 = std::fabs(rng.normal());
      run.records.push_back(rec);
    }
  }
  for (bool use_w2 : {false, true}) {
    const auto agg = aggregate_metric(runs, use_w2);
    REQUIRE(agg.size() == 5);
    for (const auto& p : agg) {
      CHECK(p.lo <= p.mean + 1e-12);
      CHECK(p.mean <= p.hi + 1e-12);
    }
  }
}

TEST_CASE("checkpoint round trip") {
  const std::string dir = temp_dir("ckpt");
  std::vector<double> theta{1.5, -2.25, 0.0, 1e-9};
  save_checkpoint(dir + "/policy", theta, {{"task", "dppo"}});
  const auto back = load_checkpoint(dir + "/policy");
  CHECK(back == theta);
}

TEST_CASE("parallel_for covers every index once") {
  std::vector<int> hits(257, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
}

TEST_CASE("portfolio experiment: aggregate of one rep equals the run") {
  const std::string dir = temp_dir("pf1");
  Config cfg;
  cfg.set("task", "portfolio");
  cfg.set("out", dir);
  cfg.set("model.model", "mixture:d=2");
  cfg.set("model.distortion", "cvar:0.7");
  cfg.set("model.grid", "uniform:20");
  cfg.set("run.algo", "qf");
  cfg.set("run.iters", "400");
  cfg.set("run.log_every", "100");
  cfg.set("reps", "1");
  cfg.set("seed", "11");
  cfg.set("w2.log_resolution", "65");
  cfg.set("w2.final_resolution", "129");
  const ExperimentResult res = run_experiment(cfg);
  REQUIRE(res.runs.size() == 1);
  const auto agg = aggregate_metric(res.runs, true);
  REQUIRE(agg.size() == res.runs[0].records.size());
  for (std::size_t i = 0; i < agg.size(); ++i) {
    CHECK(agg[i].mean == res.runs[0].records[i].w2);
    CHECK(agg[i].lo == agg[i].hi);
  }
  CHECK(fs::exists(dir + "/run_000.csv"));
  CHECK(fs::exists(dir + "/aggregate.csv"));
  CHECK(fs::exists(dir + "/curve.svg"));
  CHECK(fs::exists(dir + "/config.txt"));

  // The stored config re-parses identically.
  CHECK(Config::from_file(dir + "/config.txt") == cfg);
}

TEST_CASE("experiment rerun produces byte-identical CSVs modulo wall clock") {
  const std::string dir1 = temp_dir("det1");
  const std::string dir2 = temp_dir("det2");
  Config cfg;
  cfg.set("task", "portfolio");
  cfg.set("model.model", "mixture:d=2");
  cfg.set("model.distortion", "cvar:0.7");
  cfg.set("model.grid", "uniform:15");
  cfg.set("run.algo", "dm");
  cfg.set("run.iters", "300");
  cfg.set("run.log_every", "150");
  cfg.set("reps", "2");
  cfg.set("seed", "3");
  cfg.set("w2.log_resolution", "65");
  cfg.set("w2.final_resolution", "65");
  cfg.set("out", dir1);
  run_experiment(cfg);
  cfg.set("out", dir2);
  run_experiment(cfg);
  for (const char* name : {"/run_000.csv", "/run_001.csv"}) {
    CHECK(csv_without_ms(dir1 + name) == csv_without_ms(dir2 + name));
  }
}

TEST_CASE("tracker bench writes a slope summary") {
  const std::string dir = temp_dir("bench");
  Config cfg;
  cfg.set("task", "tracker-bench");
  cfg.set("out", dir);
  cfg.set("bench.mode", "quantile");
  cfg.set("reps", "10");
  cfg.set("run.iters", "20000");
  cfg.set("bench.k_min", "300");
  cfg.set("bench.k_max", "20000");
  const ExperimentResult res = run_experiment(cfg);
  CHECK(res.stats.count("slope") == 1);
  CHECK(res.stats.at("slope") < 0.0);
  CHECK(fs::exists(dir + "/mse.csv"));
  CHECK(fs::exists(dir + "/summary.csv"));
}

TEST_CASE("unknown task is rejected with the offending key") {
  Config cfg;
  cfg.set("task", "nope");
  CHECK_THROWS_AS(run_experiment(cfg), std::invalid_argument);
}
