#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "drm/harness.hpp"

namespace {

void add_common(CLI::App* cmd, drm::Config& cfg) {
  cmd->add_option_function<std::string>(
      "--config", [&cfg](const std::string& path) { cfg = drm::Config::from_file(path); },
      "Key-value config file; flags override its entries");
  cmd->add_option_function<std::string>(
      "--out", [&cfg](const std::string& v) { cfg.set("out", v); }, "Output directory");
  cmd->add_option_function<long long>(
      "--seed", [&cfg](long long v) { cfg.set("seed", std::to_string(v)); }, "Base seed");
  cmd->add_option_function<long long>(
      "--reps", [&cfg](long long v) { cfg.set("reps", std::to_string(v)); }, "Replications");
  cmd->add_option_function<long long>(
      "--iters", [&cfg](long long v) { cfg.set("run.iters", std::to_string(v)); }, "Iterations");
  cmd->add_option_function<long long>(
      "--log-every", [&cfg](long long v) { cfg.set("run.log_every", std::to_string(v)); },
      "Logging cadence");
  cmd->add_option_function<long long>(
      "--threads", [&cfg](long long v) { cfg.set("threads", std::to_string(v)); }, "Worker pool size");
}

void report(const drm::ExperimentResult& result) {
  std::cout << "artifacts: " << result.out_dir << "\n";
  for (const auto& [k, v] : result.stats) std::cout << k << " = " << v << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-timescale stochastic approximation for distortion risk measures"};
  app.require_subcommand(1);

  drm::Config pcfg, dcfg, bcfg;

  auto* portfolio = app.add_subcommand("portfolio", "Robust portfolio selection experiment");
  add_common(portfolio, pcfg);
  portfolio->add_option_function<std::string>(
      "--distortion", [&](const std::string& v) { pcfg.set("model.distortion", v); },
      "cvar:0.7 | wang:-0.85 | sshape:5 | disc:5 | cpt:0.7 | identity");
  portfolio->add_option_function<std::string>(
      "--algo", [&](const std::string& v) { pcfg.set("run.algo", v); }, "dm | qf | hybrid | batching");
  portfolio->add_option_function<std::string>(
      "--model", [&](const std::string& v) { pcfg.set("model.model", v); }, "mixture:d=10");
  portfolio->add_option_function<std::string>(
      "--grid", [&](const std::string& v) { pcfg.set("model.grid", v); }, "uniform:N | sqrt:M");
  portfolio->add_option_function<long long>(
      "--batch", [&](long long v) { pcfg.set("run.batch", std::to_string(v)); },
      "Batch size (batching baseline)");

  auto* dppo = app.add_subcommand("dppo", "DRM-based policy optimization on the inventory MDP");
  add_common(dppo, dcfg);
  dppo->add_option_function<std::string>(
      "--distortion", [&](const std::string& v) { dcfg.set("dppo.distortion", v); },
      "Distortion for the return distribution");
  dppo->add_option_function<std::string>(
      "--env", [&](const std::string& v) { dcfg.set("dppo.env", v); }, "chain | single");
  dppo->add_option_function<long long>(
      "--k0", [&](long long v) { dcfg.set("dppo.k0_interval", std::to_string(v)); },
      "Sampling interval K0");
  dppo->add_option_function<double>(
      "--epsilon", [&](double v) { dcfg.set_num("dppo.epsilon", v); }, "IS tolerance");
  dppo->add_option_function<long long>(
      "--horizon", [&](long long v) { dcfg.set("dppo.horizon", std::to_string(v)); }, "Episode length");
  dppo->add_option_function<long long>(
      "--hidden", [&](long long v) { dcfg.set("dppo.hidden", std::to_string(v)); }, "Hidden width");

  auto* bench = app.add_subcommand("bench", "Tracker benchmarks");
  auto* tracker = bench->add_subcommand("tracker", "Quantile / quantile-gradient tracking");
  add_common(tracker, bcfg);
  tracker->add_option_function<std::string>(
      "--mode", [&](const std::string& v) { bcfg.set("bench.mode", v); }, "quantile | dgrad");
  tracker->add_option_function<double>(
      "--z", [&](double v) { bcfg.set_num("bench.z", v); }, "Tracked quantile level");

  CLI11_PARSE(app, argc, argv);

  try {
    if (portfolio->parsed()) {
      pcfg.set("task", "portfolio");
      report(drm::run_experiment(pcfg));
    } else if (dppo->parsed()) {
      dcfg.set("task", "dppo");
      report(drm::run_experiment(dcfg));
    } else if (bench->parsed() && tracker->parsed()) {
      bcfg.set("task", "tracker-bench");
      report(drm::run_experiment(bcfg));
    } else {
      std::cerr << "no subcommand\n";
      return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
