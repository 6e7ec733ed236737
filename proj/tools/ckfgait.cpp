#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "ckfgait/errors.hpp"
#include "ckfgait/pipeline.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Constrained Kalman filter gait estimation from three IMUs"};
  app.require_subcommand(1);

  std::string config_path;
  std::string input_dir;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> events_arg;
  int batch = 1;

  const auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Run configuration JSON file")
        ->required();
  };
  const auto add_output = [&](CLI::App* cmd) {
    cmd->add_option("--output", output_dir, "Output directory")->required();
  };
  const auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Override the gait seed");
  };
  const auto add_events = [&](CLI::App* cmd) {
    cmd->add_option("--events", events_arg,
                    "\"detect\" or a step-events CSV to use instead");
  };

  CLI::App* synth =
      app.add_subcommand("synth", "Generate a synthetic trial");
  add_config(synth);
  add_output(synth);
  add_seed(synth);

  CLI::App* estimate = app.add_subcommand(
      "estimate", "Run the filter over a trial directory");
  add_config(estimate);
  estimate->add_option("--input", input_dir, "Trial directory")->required();
  add_output(estimate);
  add_events(estimate);

  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "Compare est.csv against ref.csv and write metrics");
  add_config(evaluate);
  evaluate->add_option("--input", input_dir, "Trial directory")->required();
  add_output(evaluate);

  CLI::App* pipeline = app.add_subcommand(
      "pipeline", "synth, estimate, and evaluate in one go");
  add_config(pipeline);
  add_output(pipeline);
  add_seed(pipeline);
  add_events(pipeline);
  pipeline->add_option("--batch", batch, "Number of trials to run")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ckfgait::RunConfig cfg = ckfgait::loadRunConfig(config_path);
    if (seed) cfg.gait.seed = *seed;

    std::optional<fs::path> events_file;
    if (events_arg) {
      if (*events_arg == "detect") {
        cfg.event_source = ckfgait::EventSource::kDetect;
      } else {
        events_file = fs::path(*events_arg);
      }
    }

    if (synth->parsed()) {
      ckfgait::commandSynth(cfg, output_dir);
    } else if (estimate->parsed()) {
      ckfgait::commandEstimate(cfg, input_dir, output_dir, events_file);
    } else if (evaluate->parsed()) {
      ckfgait::commandEvaluate(cfg, input_dir, output_dir);
    } else if (pipeline->parsed()) {
      if (batch > 1) {
        if (events_file) {
          std::fprintf(stderr,
                       "error: --events <file> cannot combine with "
                       "--batch > 1\n");
          return 2;
        }
        ckfgait::commandBatch(cfg, output_dir, batch);
      } else {
        ckfgait::commandPipeline(cfg, output_dir, events_file);
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
