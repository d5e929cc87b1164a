// fedsim: federated learning simulator with attention-based client selection.
//
//   fedsim run <config.json>        run an experiment, write metrics + summary
//   fedsim partition <config.json>  shard the dataset, write the manifest
//   fedsim diagnose <config.json>   convergence traces, rate fit, assumptions
//
// Exit codes: 0 ok, 1 validation error (config/format), 2 runtime failure.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedsim/commands.hpp"

namespace {

struct SubArgs {
  std::string config_path;
  std::string output_dir;
  std::vector<std::uint64_t> seeds;
  bool quiet = false;
};

void add_common(CLI::App* sub, SubArgs& args) {
  sub->add_option("config", args.config_path, "Path to the experiment config (JSON)")
      ->required();
  sub->add_option("--output-dir", args.output_dir,
                  "Override the config's output_dir");
  sub->add_option("--seeds", args.seeds,
                  "Override the config's master seed list")
      ->delimiter(',');
  sub->add_flag("--quiet", args.quiet, "Suppress progress lines on stderr");
}

fedsim::CliOptions to_options(const SubArgs& args) {
  fedsim::CliOptions opts;
  if (!args.output_dir.empty()) opts.output_dir = args.output_dir;
  if (!args.seeds.empty()) opts.seeds = args.seeds;
  opts.quiet = args.quiet;
  return opts;
}

int dispatch(const SubArgs& args,
             int (*cmd)(const fedsim::ParsedConfig&, const fedsim::CliOptions&)) {
  fedsim::ParsedConfig parsed;
  try {
    parsed = fedsim::parse_config(args.config_path);
  } catch (const std::exception& e) {
    std::cerr << "config: error: " << e.what() << "\n";
    return fedsim::kExitValidation;
  }
  return cmd(parsed, to_options(args));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with attention-based client selection"};
  app.require_subcommand(1);

  SubArgs run_args, part_args, diag_args;
  CLI::App* run = app.add_subcommand("run", "Run a federated experiment");
  add_common(run, run_args);
  CLI::App* part = app.add_subcommand("partition",
                                      "Partition the dataset and write a manifest");
  add_common(part, part_args);
  CLI::App* diag = app.add_subcommand("diagnose",
                                      "Run convergence and assumption diagnostics");
  add_common(diag, diag_args);

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return dispatch(run_args, &fedsim::cmd_run);
  if (part->parsed()) return dispatch(part_args, &fedsim::cmd_partition);
  return dispatch(diag_args, &fedsim::cmd_diagnose);
}
