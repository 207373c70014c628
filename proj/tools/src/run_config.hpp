// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <mmfuse/datagen.hpp>
#include <mmfuse/optim.hpp>

namespace mmfuse::cli {

struct FusionSection {
  std::size_t d_out = 32;
  double alpha_logit_init = 0.0;
};

struct SamplerSection {
  double temperature = 1.0;
  double lr = 1e-3;
  std::size_t steps = 500;
  std::size_t batch = 32;
  std::size_t n_layers = 1;
  std::size_t d_k = 32;
  double adr_weight = 1.0;
  OptimizerKind optimizer = OptimizerKind::adam;
  double w_init_scale = 0.01;
};

struct ToyLMSection {
  std::size_t vocab = 64;
  std::size_t embed_dim = 32;
  std::size_t key_dim = 16;
  std::size_t adapter_rank = 4;
  std::size_t stages = 2;
  std::size_t stage1_steps = 200;
  std::size_t stage2_steps = 200;
  std::size_t records = 64;
  double lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
};

/// Each flag switches off one component; all true is the full model.
struct Ablations {
  bool visual_enhancement = true;     // false: stream 1 through a single projection
  bool redundancy_adaptation = true;  // false: scorer keeps its initial weights
  bool attention_strategy = true;     // false: distill from planted labels only
  bool stage2 = true;                 // false: skip diverse-instruction tuning
  bool site_prompt = true;            // false: questions carry no site cue
};

struct Paths {
  std::filesystem::path out_dir = "mmfuse-run";
  std::optional<std::filesystem::path> data_dir;  // defaults to out_dir

  std::filesystem::path data() const { return data_dir.value_or(out_dir); }
};

struct RunConfig {
  std::uint64_t seed = 0;
  GroupSpec group_spec{};
  std::size_t train_groups = 500;
  std::size_t heldout_groups = 200;
  FusionSection fusion{};
  SamplerSection sampler{};
  ToyLMSection toylm{};
  Ablations ablations{};
  Paths paths{};

  std::size_t total_groups() const noexcept { return train_groups + heldout_groups; }
  /// Throws ConfigError.
  void validate() const;
};

/// Parses a JSON config document; unknown keys are rejected. Throws
/// ConfigError for bad values and ParseError for malformed JSON.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical JSON form of a config (all keys, fixed order).
std::string run_config_to_json(const RunConfig& config);

}  // namespace mmfuse::cli
