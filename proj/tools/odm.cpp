// odm: streaming anomaly detection over node power/temperature telemetry.

#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "odm/app.hpp"
#include "odm/live.hpp"

int main(int argc, char** argv) {
  using namespace odm::app;
  RunConfig cfg;
  std::string scaler = "minmax";

  CLI::App app{"Unsupervised LSTM-autoencoder anomaly detection for node telemetry"};
  app.require_subcommand(1, 1);
  app.set_config("--config", "", "Flat key=value file; keys are the long flag names without dashes");
  app.allow_config_extras(false);

  app.add_option("--input", cfg.input, "Input telemetry CSV (live: '-' or unix:<socket>)");
  app.add_option("--output", cfg.output, "Output file (default: stdout)");
  app.add_option("--labels", cfg.labels, "Labels CSV (synth writes it, eval reads it)");
  app.add_option("--window", cfg.window, "Rows per autoencoder window")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--stride", cfg.stride, "Stride between training windows")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--bucket-seconds", cfg.bucket_seconds, "Downsampling bucket width in seconds")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--retrain-buckets", cfg.retrain_buckets, "Buckets per retraining interval")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--scaler", scaler, "Normalization")->capture_default_str()->check(CLI::IsMember({"minmax", "standard"}));
  app.add_option("--epochs", cfg.epochs, "Training epochs per interval")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--lr", cfg.lr, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--batch-size", cfg.batch_size, "Training mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  app.add_option("--state-dir", cfg.state_dir, "Directory for per-node <node>.state files");
  app.add_flag("--deterministic", cfg.deterministic, "Retrain synchronously; byte-stable output");
  app.add_option("--pairs", cfg.pairs, "synth/eval: coupled node pairs")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--hours", cfg.hours, "synth/eval: simulated hours")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--faults", cfg.faults, "synth/eval: fault set")->capture_default_str()->check(CLI::IsMember({"standard", "none"}));
  app.add_option("--slack", cfg.slack, "eval: match slack in buckets")->capture_default_str()->check(CLI::NonNegativeNumber);
  app.add_flag("--corrupt-gradient", cfg.corrupt_gradient, "gradcheck: perturb the analytic gradient (negative control)");

  std::map<std::string, CLI::App*> cmds;
  for (auto [name, help] : {std::pair{"replay", "Run detection over a file as fast as possible"},
                            std::pair{"live", "Run detection over stdin or a local socket"},
                            std::pair{"synth", "Generate labeled synthetic telemetry"},
                            std::pair{"eval", "Generate or load labeled data, replay it and score the events"},
                            std::pair{"gradcheck", "Compare backpropagation with finite differences"},
                            std::pair{"export", "Write per-bucket actual/reconstructed/error/threshold CSV"}}) {
    cmds[name] = app.add_subcommand(name, help)->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitBadInput;
  }
  cfg.scaler = *odm::parse_scaler(scaler);

  if (cmds["replay"]->parsed()) return cmd_replay(cfg, std::cout, std::cerr);
  if (cmds["live"]->parsed()) return cmd_live(cfg, std::cin, std::cout, std::cerr);
  if (cmds["synth"]->parsed()) return cmd_synth(cfg, std::cout, std::cerr);
  if (cmds["eval"]->parsed()) return cmd_eval(cfg, std::cout, std::cerr);
  if (cmds["gradcheck"]->parsed()) return cmd_gradcheck(cfg, std::cout, std::cerr);
  if (cmds["export"]->parsed()) return cmd_export(cfg, std::cout, std::cerr);
  return kExitInternal;
}
