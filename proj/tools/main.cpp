#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xfer/config.hpp"
#include "xfer/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitRuntimeError = 3;

struct GlobalArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> jobs;
};

xfer::ExperimentConfig load_config(const GlobalArgs& args) {
  xfer::ExperimentConfig cfg;
  if (!args.config_path.empty()) cfg = xfer::ExperimentConfig::load_file(args.config_path);
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  if (args.seed_override) cfg.seeds = {*args.seed_override};
  if (args.jobs) cfg.jobs = *args.jobs;
  xfer::resolve_and_validate(cfg);  // fail fast with a config error
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic fundus transfer-learning experiment framework"};
  app.require_subcommand(1);

  GlobalArgs args;
  app.add_option("--config", args.config_path, "Experiment config JSON (defaults apply if omitted)");
  app.add_option("--out", args.out_dir, "Output directory (overrides config output_dir)");
  app.add_option("--seed-override", args.seed_override,
                 "Replace the sweep seed list with this single seed");
  app.add_option("--jobs", args.jobs, "Worker threads for sweep cells");

  auto* gen = app.add_subcommand("gen-data", "Generate the three datasets and manifests");
  std::string pretrain_mode = "both";
  auto* pre = app.add_subcommand("pretrain", "Train source checkpoints");
  pre->add_option("--mode", pretrain_mode, "Which pretraining to run: generic, source or both")
      ->check(CLI::IsMember({"generic", "source", "both"}));
  auto* swp = app.add_subcommand("sweep", "Run the (mode x reduction x seed) grid");
  auto* rep = app.add_subcommand("report", "Emit tables.csv and learning-curve SVGs");
  auto* all = app.add_subcommand("all", "Full pipeline: gen-data, pretrain, sweep, report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfigError;
  }

  try {
    xfer::ExperimentConfig cfg = load_config(args);
    xfer::Logger log(xfer::RunPaths{cfg.output_dir}.log_file());
    if (gen->parsed()) {
      xfer::cmd_gen_data(cfg, log);
    } else if (pre->parsed()) {
      std::vector<xfer::InitMode> which;
      if (pretrain_mode == "generic" || pretrain_mode == "both") {
        which.push_back(xfer::InitMode::GenericPretrained);
      }
      if (pretrain_mode == "source" || pretrain_mode == "both") {
        which.push_back(xfer::InitMode::SourcePretrained);
      }
      xfer::cmd_pretrain(cfg, which, log);
    } else if (swp->parsed()) {
      xfer::cmd_sweep(cfg, log);
    } else if (rep->parsed()) {
      xfer::cmd_report(cfg, log);
    } else if (all->parsed()) {
      xfer::cmd_all(cfg, log);
    }
    return kExitOk;
  } catch (const xfer::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntimeError;
  }
}
