// Command-line driver: one subcommand per pipeline stage.

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "smood/pipeline.hpp"

namespace {

using Command = std::function<void(const smood::PipelineConfig&, const std::filesystem::path&)>;

const std::map<std::string, std::pair<Command, const char*>>& commands() {
  static const std::map<std::string, std::pair<Command, const char*>> table{
      {"doe", {smood::cmd_doe, "sample train/test designs and label them with the oracle"}},
      {"train", {smood::cmd_train, "tune and fit the surrogate, write out-of-fold predictions"}},
      {"profile", {smood::cmd_profile, "compute sensitivity profiles and neighbour sigmas"}},
      {"label", {smood::cmd_label, "bootstrap the error interval and label ID/OOD"}},
      {"detector", {smood::cmd_detector, "tune and fit the OOD detector and the sigma baseline"}},
      {"hybrid", {smood::cmd_hybrid, "route test queries and score the hybrid model"}},
      {"report", {smood::cmd_report, "consolidate every stage into report.json"}},
      {"run", {smood::cmd_run, "run every stage in order"}},
  };
  return table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"smoothness-based OOD detection for surrogate models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(smood::kToolVersion));
  std::string config_path, out_dir;
  for (const auto& [name, entry] : commands()) {
    auto* sub = app.add_subcommand(name, entry.second);
    sub->add_option("--config", config_path, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "run directory")->required();
  }
  CLI11_PARSE(app, argc, argv);

  const std::string stage = app.get_subcommands().front()->get_name();
  smood::PipelineConfig config;
  try {
    config = smood::load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "[" << stage << "] config error: " << e.what() << "\n";
    return 2;
  }
  try {
    commands().at(stage).first(config, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "[" << stage << "] error: " << e.what() << "\n";
    return 1;
  }
  return EXIT_SUCCESS;
}
