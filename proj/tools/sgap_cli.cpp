#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sgap/cli_reporting.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Adversarial image privatizer: training, evaluation and the "
               "distortion-weight sweep"};
  app.require_subcommand(1);

  std::string config_path, params_path, input, csv_path;
  std::string train_out = "run_out", priv_out, sweep_out, report_out = ".";
  uint64_t seed = 1;
  bool seed_set = false;

  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config_path, "experiment config JSON")->required();
  train->add_option("--out", train_out, "output directory");
  train->add_option("--seed", seed, "override the training seed")
      ->each([&](const std::string&) { seed_set = true; });

  auto* priv = app.add_subcommand("privatize", "write a privatized copy of a corpus");
  priv->add_option("--params", params_path, "trained parameter archive")->required();
  priv->add_option("--input", input,
                   "corpus directory, or \"synthetic\" for the built-in corpus")
      ->required();
  priv->add_option("--out", priv_out, "output directory")->required();
  priv->add_option("--seed", seed, "noise seed");

  auto* eval = app.add_subcommand("eval", "evaluate privacy and utility of a model");
  eval->add_option("--params", params_path, "trained parameter archive")->required();
  eval->add_option("--config", config_path, "optional eval/utility config JSON");
  eval->add_option("--seed", seed, "override the evaluation seed")
      ->each([&](const std::string&) { seed_set = true; });

  auto* sweep = app.add_subcommand("sweep", "run the distortion-weight grid");
  sweep->add_option("--config", config_path, "sweep config JSON")->required();
  sweep->add_option("--out", sweep_out, "override the configured output directory");

  auto* report = app.add_subcommand("report", "regenerate plots from a sweep CSV");
  report->add_option("--csv", csv_path, "sweep.csv produced by the sweep")->required();
  report->add_option("--out", report_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::optional<uint64_t> seed_override;
  if (seed_set) seed_override = seed;

  if (train->parsed())
    return sgap::cmd_train(config_path, train_out, seed_override, std::cout,
                           std::cerr);
  if (priv->parsed())
    return sgap::cmd_privatize(params_path, input, priv_out, seed, std::cout,
                               std::cerr);
  if (eval->parsed())
    return sgap::cmd_eval(params_path, config_path, seed_override, std::cout,
                          std::cerr);
  if (sweep->parsed()) {
    std::optional<std::string> out_override;
    if (!sweep_out.empty()) out_override = sweep_out;
    return sgap::cmd_sweep(config_path, out_override, std::cout, std::cerr);
  }
  if (report->parsed())
    return sgap::cmd_report(csv_path, report_out, std::cout, std::cerr);
  return 2;
}
