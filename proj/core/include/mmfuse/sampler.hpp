// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmfuse/fusion.hpp"
#include "mmfuse/optim.hpp"

namespace mmfuse {

/// k candidate images that share one findings text. Only the planted valid
/// image (when known) mirrors the text.
struct RedundantGroup {
  std::string group_id;
  std::vector<std::string> image_ids;
  std::vector<FeatureMatrix> image_features;  // k matrices, each m x d (post-fusion)
  FeatureMatrix text_features;                // m_t x d
  std::optional<std::size_t> planted_valid_index;

  std::size_t size() const noexcept { return image_features.size(); }
  std::size_t channels() const;
  /// k >= 2, one shared image shape, text channels equal image channels,
  /// label (if any) in range. Throws ShapeError / DomainError.
  void validate() const;
};

/// Stack of single-head cross-attention layers: text queries, image keys.
struct AttentionScorerParams {
  std::vector<Matrix> query_weight;  // per layer, d x d_k
  std::vector<Matrix> key_weight;    // per layer, d x d_k
  bool trainable = false;

  std::size_t n_layers() const noexcept { return query_weight.size(); }
  std::size_t key_dim() const;
  std::size_t input_dim() const;
  void validate() const;

  /// Query and key share one map per layer so q.k tracks the inner product of
  /// the raw features: an identity embedding when d_k >= d, otherwise a
  /// Gaussian map with N(0, 1/d_k) entries.
  static AttentionScorerParams aligned(std::size_t d, std::size_t d_k, std::size_t n_layers,
                                       std::uint64_t seed);
};

struct ScorerParams {
  std::vector<double> w;  // one weight per feature channel
  AttentionScorerParams attention;

  /// w ~ N(0, w_init_scale^2); attention from AttentionScorerParams::aligned.
  static ScorerParams initial(std::size_t d, std::size_t d_k, std::size_t n_layers,
                              std::uint64_t seed, double w_init_scale = 0.01);
};

struct ScoreVector {
  std::vector<double> raw;
  std::optional<std::vector<double>> normalized;
};

enum class ScoreMode { feature, attention };

/// Mean-pools h_v over tokens, then returns sum_j w_j * pooled_j.
double feature_score(const FeatureMatrix& h_v, std::span<const double> w);

/// Mean over text tokens of log-sum-exp over image tokens of the scaled
/// query-key products. Earlier layers replace the text states by their
/// attention-weighted average of image rows.
double attention_score(const FeatureMatrix& h_v, const FeatureMatrix& h_t,
                       const AttentionScorerParams& params);

ScoreVector score_group(const RedundantGroup& group, const ScorerParams& params, ScoreMode mode);

std::vector<double> normalize_scores(std::span<const double> raw, double temperature);

/// Cross-entropy of the normalized feature scores against the normalized
/// attention scores. The attention side is a constant target.
double adr_loss(std::span<const double> attention_raw, std::span<const double> feature_raw,
                double temperature);

/// Highest raw score; ties go to the lowest index.
std::size_t select_valid(const ScoreVector& scores);

enum class DistillationTarget {
  attention,      // normalized attention scores as pseudo labels
  planted_label,  // one-hot planted label; unlabeled groups are skipped
};

struct SamplerHyper {
  OptimizerConfig optimizer{};
  std::size_t steps = 500;
  double temperature = 1.0;
  std::size_t batch = 32;
  double loss_weight = 1.0;  // multiplier on L_adr when mixed with other losses
  DistillationTarget target = DistillationTarget::attention;
};

struct SamplerTrainResult {
  ScorerParams params;
  std::vector<double> loss_history;  // mean batch loss per step
  double final_train_loss = 0.0;     // mean loss over all training groups after the last step
  double mean_target_entropy = 0.0;  // mean entropy of the target distributions
};

/// Mean L_adr over `groups` at the given w; writes dL/dw when `grad_w` is set.
double adr_objective(std::span<const RedundantGroup> groups, const ScorerParams& params,
                     double temperature, std::vector<double>* grad_w,
                     DistillationTarget target = DistillationTarget::attention);

/// Fits w by minimizing L_adr over cyclic mini-batches. Attention parameters
/// are never modified: their scores are detached targets.
/// Throws NumericError("... step N") if the loss becomes non-finite.
SamplerTrainResult train_sampler(std::span<const RedundantGroup> groups, ScorerParams params,
                                 const SamplerHyper& hyper);

/// Fraction of labeled groups whose selection matches the planted index.
double selection_accuracy(std::span<const RedundantGroup> groups, const ScorerParams& params,
                          ScoreMode mode);

// Serialization.
std::vector<RedundantGroup> read_groups_jsonl(const std::filesystem::path& path);
std::string groups_to_jsonl(std::span<const RedundantGroup> groups);

struct ScorerMeta {
  std::uint64_t seed = 0;
  std::size_t steps = 0;
};
std::string scorer_params_to_json(const ScorerParams& params, const ScorerMeta& meta);
ScorerParams load_scorer_params(const std::filesystem::path& path, ScorerMeta* meta = nullptr);

}  // namespace mmfuse
