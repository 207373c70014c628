// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mmfuse/fusion.hpp"
#include "mmfuse/optim.hpp"

namespace mmfuse {

/// Token ids into a ToyLM vocabulary.
using TokenSequence = std::vector<std::size_t>;

/// Low-rank update scale * (a * b) added to a frozen base weight.
struct LowRankAdapter {
  Matrix a;  // d_in x r
  Matrix b;  // r x d_out
  double scale = 1.0;

  std::size_t rank() const noexcept { return a.cols(); }
  /// Shapes compose with a d_in x d_out base and r < min(d_in, d_out).
  void validate(std::size_t d_in, std::size_t d_out) const;
};

/// w + scale * (a * b). The input is left untouched.
Matrix apply_low_rank_adapter(const Matrix& w, const LowRankAdapter& adapter);

struct ToyLMConfig {
  std::size_t vocab_size = 64;
  std::size_t embed_dim = 32;
  std::size_t key_dim = 16;
  std::size_t visual_dim = 16;
  std::size_t adapter_rank = 4;
  double adapter_scale = 1.0;
  std::vector<std::string> adapter_targets{"output_weight"};
};

/// Parameter names of the conditional head.
namespace toylm_names {
inline constexpr const char* kTokenEmbedding = "token_embedding";        // V x E
inline constexpr const char* kContextWeight = "context_projection.weight";  // d x E
inline constexpr const char* kContextBias = "context_projection.bias";  // 1 x E
inline constexpr const char* kAttnQuery = "attn_query";                 // E x d_k
inline constexpr const char* kAttnKey = "attn_key";                     // E x d_k
inline constexpr const char* kOutputWeight = "output_weight";           // E x V
}  // namespace toylm_names

/// Weights of a one-block conditional language head: the pooled visual
/// feature is projected into a context row that precedes the embedded
/// instruction and prefix tokens; one cross-attention mixing step from the
/// final position feeds a linear output layer.
struct ToyLMParams {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 0;
  std::size_t key_dim = 0;
  std::size_t visual_dim = 0;
  std::map<std::string, Matrix> weights;
  std::map<std::string, LowRankAdapter> adapters;  // keyed by base weight name
  std::set<std::string> freeze_spec;

  static ToyLMParams init(const ToyLMConfig& config, std::uint64_t seed);

  /// Base weights followed by "<base>.lora_a" / "<base>.lora_b" per adapter.
  std::vector<std::string> parameter_names() const;
  Matrix& parameter(const std::string& name);
  const Matrix& parameter(const std::string& name) const;
  /// Base weight with its adapter (if any) folded in.
  Matrix effective(const std::string& base) const;
  void validate() const;
};

/// Freeze set of the default tuning recipe: everything except the context
/// projection and the adapters.
std::set<std::string> default_freeze_spec();

/// All parameter names minus freeze_spec. Throws ConfigError when the freeze
/// spec names an unknown parameter.
std::vector<std::string> trainable_parameters(const ToyLMParams& params);

std::vector<double> next_token_dist(const ToyLMParams& params, const FeatureMatrix& visual,
                                    const TokenSequence& instruction, const TokenSequence& prefix);

/// sum_l log p(answer[l] | visual, instruction, answer[0:l]); always <= 0.
double sequence_log_prob(const ToyLMParams& params, const FeatureMatrix& visual,
                         const TokenSequence& instruction, const TokenSequence& answer);

struct LMExample {
  FeatureMatrix visual;
  TokenSequence instruction;
  TokenSequence answer;
};

using NamedGrads = std::map<std::string, Matrix>;

/// Mean over examples of the per-token cross-entropy -log p(answer) / L.
double teacher_forced_loss(const ToyLMParams& params, std::span<const LMExample> batch);
/// Same loss; fills `grads` with dLoss/dparam for every parameter name.
double teacher_forced_loss_and_grad(const ToyLMParams& params, std::span<const LMExample> batch,
                                    NamedGrads& grads);

struct LMTrainHyper {
  OptimizerConfig optimizer{};
  std::size_t stage1_steps = 1000;
  std::size_t stage2_steps = 1000;
  std::size_t batch = 0;  // 0 = full batch
};

struct StageLoss {
  int stage = 1;
  std::size_t step = 0;
  double loss = 0.0;
};

struct LMTrainResult {
  ToyLMParams params;
  std::vector<StageLoss> history;
  double final_loss = 0.0;  // full-batch loss on the last non-empty stage
};

/// Stage 1 on the concept-alignment records, then stage 2 from the stage-1
/// weights on the diverse records (skipped when empty). Only trainable
/// parameters change. Throws NumericError naming stage and step on NaN.
LMTrainResult train_two_stage(std::span<const LMExample> stage1, std::span<const LMExample> stage2,
                              ToyLMParams params, const LMTrainHyper& hyper);

/// Greedy decoding until `stop_id` or `max_len` tokens.
TokenSequence greedy_decode(const ToyLMParams& params, const FeatureMatrix& visual,
                            const TokenSequence& instruction, std::size_t max_len,
                            std::size_t stop_id);

/// Maps text tokens to ids: 0 is <unk>, 1 is <stop>, then the most frequent
/// tokens (ties broken lexicographically) up to the vocabulary size.
class Vocabulary {
 public:
  static constexpr std::size_t kUnk = 0;
  static constexpr std::size_t kStop = 1;

  static Vocabulary build(std::span<const std::string> texts, std::size_t vocab_size);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  TokenSequence encode(std::string_view text, bool append_stop = false) const;
  std::string decode(const TokenSequence& ids) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
};

std::string toylm_to_json(const ToyLMParams& params, const Vocabulary* vocabulary = nullptr);
ToyLMParams load_toylm(const std::filesystem::path& path, Vocabulary* vocabulary = nullptr);

}  // namespace mmfuse
