// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <mmfuse/gradcheck.hpp>

#include "run_config.hpp"

namespace mmfuse::cli {

enum ExitCode : int {
  kOk = 0,
  kInternalError = 1,
  kConfigError = 2,
  kIoError = 3,
  kNumericError = 4,
  kAcceptanceFailure = 5,
};

/// Maps a library exception to the documented exit code.
int exit_code_for(const std::exception& e);

// File names inside the data / output directories.
inline constexpr const char* kGroupsFile = "groups.jsonl";
inline constexpr const char* kInstructionsFile = "instructions.jsonl";
inline constexpr const char* kDiverseInstructionsFile = "instructions_diverse.jsonl";
inline constexpr const char* kStream1File = "stream1.jsonl";
inline constexpr const char* kStream2File = "stream2.jsonl";
inline constexpr const char* kFusionFile = "fusion.json";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kScorerFile = "sampler.json";
inline constexpr const char* kToyLMFile = "toylm.json";
inline constexpr const char* kLossCurveFile = "loss_curves.csv";
inline constexpr const char* kTrainSummaryFile = "train_summary.json";
inline constexpr const char* kSelectionsFile = "selections.jsonl";
inline constexpr const char* kSelectionSummaryFile = "selection_summary.json";
inline constexpr const char* kMetricsFile = "metrics_report.json";
inline constexpr const char* kGradcheckFile = "gradcheck.csv";
inline constexpr const char* kReportFile = "report.json";

/// Caption of group `index`: "<site> <finding>", fixed by (seed, index).
struct Caption {
  std::string site;
  std::string text;
};
Caption caption_for(std::uint64_t seed, std::size_t index);

int cmd_gen_data(const RunConfig& config, std::ostream& log);
int cmd_train(const RunConfig& config, std::ostream& log);
int cmd_select(const RunConfig& config, const std::optional<std::filesystem::path>& scorer, std::ostream& log);

struct EvaluateOptions {
  std::optional<std::filesystem::path> pairs;        // {"candidate", "reference", "closed"?} lines
  std::optional<std::filesystem::path> predictions;  // used with references
  std::optional<std::filesystem::path> references;
  bool smoothing = false;
};
int cmd_evaluate(const RunConfig& config, const EvaluateOptions& options, std::ostream& log);

struct GradcheckOptions {
  std::size_t seeds = 10;
  double tolerance = 1e-4;
  double step = 1e-5;
  std::optional<std::string> corrupt;  // parameter group whose analytic gradient is perturbed
};

/// One report per trainable parameter group, worst case over all seeds.
std::vector<GradReport> run_gradcheck(const GradcheckOptions& options);
int cmd_gradcheck(const RunConfig& config, const GradcheckOptions& options, std::ostream& log);

int cmd_report(const RunConfig& config, std::ostream& log);

}  // namespace mmfuse::cli
