#pragma once

#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ulab/config.hpp"
#include "ulab/experiment.hpp"

namespace ulab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

using CommandFn = std::function<std::vector<fs::path>(const ExperimentConfig&, RunOptions)>;

inline const std::map<std::string, std::pair<CommandFn, std::string>>& subcommands() {
  static const std::map<std::string, std::pair<CommandFn, std::string>> table{
      {"gen-data", {cmd_gen_data, "Generate the synthetic dataset CSV"}},
      {"train", {cmd_train, "Train the original model; write checkpoint, event log and report"}},
      {"mem", {cmd_mem, "Estimate memorization scores by subsampled retraining"}},
      {"proxy", {cmd_proxy, "Compute memorization proxy score tables"}},
      {"fidelity", {cmd_fidelity, "Spearman/runtime profile of every proxy against memorization"}},
      {"rum", {cmd_rum, "RUM^F vs vanilla vs shuffle unlearning experiment"}},
      {"sequential", {cmd_sequential, "Multi-step sequential unlearning with Gini tracking"}},
  };
  return table;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"unlearn-lab: memorization-guided machine unlearning experiments", "unlearn-lab"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool force = false;
  int jobs = 1;
  for (const auto& [name, entry] : subcommands()) {
    auto* sub = app.add_subcommand(name, entry.second);
    sub->add_option("--config", config_path, "Experiment config file")->required();
    sub->add_option("--seed", seed, "Run a single seed instead of the config's seed list");
    sub->add_option("--out", out_dir, "Output directory (overrides experiment.output_dir)");
    sub->add_flag("--force", force, "Overwrite outputs written with a different config or seed");
    sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = load_config(config_path);
    RunOptions opt;
    opt.out = out_dir;
    opt.force = force;
    opt.jobs = jobs;
    if (seed) opt.seeds = {*seed};
    opt.log = &err;
    const auto written = subcommands().at(name).first(cfg, opt);
    for (const auto& p : written) out << p.string() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << config_path << ": " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace ulab
