// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include <mmfuse/error.hpp>

#include "commands.hpp"
#include "run_config.hpp"

namespace cli = mmfuse::cli;

int main(int argc, char** argv) {
  CLI::App app{"mmfuse: dual-encoder fusion, redundancy sampling and VQA metrics at desk scale"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON run config");
  app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--out", out_dir, "Output directory (also the data directory unless the config sets one)");
  app.add_flag("--quiet", quiet, "Suppress progress output");

  auto* gen = app.add_subcommand("gen-data", "Generate planted redundant groups and instruction records");
  auto* train = app.add_subcommand("train", "Distill the feature scorer and tune the toy language head");
  auto* select = app.add_subcommand("select", "Pick the valid image of every held-out group");
  std::string scorer_path;
  select->add_option("--scorer", scorer_path, "Scorer checkpoint (default: <out>/sampler.json)");

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against references");
  std::string pairs, predictions, references;
  bool smoothing = false;
  evaluate->add_option("--pairs", pairs, "JSON Lines of {candidate, reference, closed?}");
  evaluate->add_option("--predictions", predictions, "JSON Lines of {candidate}");
  evaluate->add_option("--references", references, "JSON Lines of {reference, closed?}");
  evaluate->add_flag("--smoothing", smoothing, "Replace zero BLEU precisions by 1e-9");

  auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  cli::GradcheckOptions grad_options;
  std::string corrupt;
  gradcheck->add_option("--seeds", grad_options.seeds, "Random parameter points per group")->capture_default_str();
  gradcheck->add_option("--tol", grad_options.tolerance, "Relative error tolerance")->capture_default_str();
  gradcheck->add_option("--corrupt", corrupt, "Perturb one analytic gradient (negative control)");

  auto* report = app.add_subcommand("report", "Check a finished run and summarize it");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kOk : cli::kConfigError;
  }

  std::ostringstream sink;
  std::ostream& log = quiet ? static_cast<std::ostream&>(sink) : std::cout;
  try {
    cli::RunConfig config = config_path.empty() ? cli::RunConfig{} : cli::load_run_config(config_path);
    if (seed) config.seed = *seed;
    if (!out_dir.empty()) config.paths.out_dir = out_dir;

    if (*gen) return cli::cmd_gen_data(config, log);
    if (*train) return cli::cmd_train(config, log);
    if (*select) {
      return cli::cmd_select(config, scorer_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(scorer_path),
                             log);
    }
    if (*evaluate) {
      cli::EvaluateOptions options;
      if (!pairs.empty()) options.pairs = pairs;
      if (!predictions.empty()) options.predictions = predictions;
      if (!references.empty()) options.references = references;
      options.smoothing = smoothing;
      return cli::cmd_evaluate(config, options, log);
    }
    if (*gradcheck) {
      if (!corrupt.empty()) grad_options.corrupt = corrupt;
      return cli::cmd_gradcheck(config, grad_options, log);
    }
    if (*report) return cli::cmd_report(config, log);
  } catch (const mmfuse::Error& e) {
    std::cerr << "mmfuse: " << e.what() << "\n";
    return cli::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "mmfuse: internal error: " << e.what() << "\n";
    return cli::kInternalError;
  }
  return cli::kInternalError;
}
