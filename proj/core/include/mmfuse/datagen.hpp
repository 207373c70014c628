// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmfuse/fusion.hpp"
#include "mmfuse/sampler.hpp"

namespace mmfuse {

/// Parameters of the planted redundant-group generator.
///
/// Each group has a unit text direction t = c*u + sqrt(1-c^2)*r, where u is a
/// lesion cue shared by every group (c = shared_cue) and r is group-specific.
/// The valid image clusters around t; decoys point in random directions
/// orthogonal to t. Every image also carries a per-image nuisance offset of
/// norm nuisance_scale orthogonal to both u and t, so ranking by a random
/// channel weighting is near chance while the text stays decisive.
struct GroupSpec {
  std::size_t k = 8;             // images per group
  std::size_t tokens = 8;        // m, tokens per image
  std::size_t text_tokens = 8;   // m_t, tokens of the findings text
  std::size_t channels = 32;     // d, width of the shared (fused) space
  std::size_t d_enc1 = 64;       // encoder 1 width
  std::size_t d_enc2 = 48;       // encoder 2 width
  double noise_sigma = 0.1;
  bool complementary = false;
  std::uint64_t seed = 0;
  double signal_scale = 2.0;
  double nuisance_scale = 2.5;
  double shared_cue = 0.5;

  /// Throws ConfigError.
  void validate() const;
};

/// One generated group plus the raw encoder streams behind its fused features.
struct GeneratedGroup {
  RedundantGroup group;
  std::vector<FeatureMatrix> stream_1;  // per image, tokens x d_enc1
  std::vector<FeatureMatrix> stream_2;  // per image, tokens x d_enc2
  std::vector<double> text_direction;   // unit vector t
};

/// Pure function of (spec, group_index).
GeneratedGroup make_group(const GroupSpec& spec, std::size_t group_index);

/// The lesion cue u shared by all groups of a spec.
std::vector<double> lesion_direction(const GroupSpec& spec);

/// Projections that map each raw stream back into the shared space, with
/// alpha_logit = 0. In complementary mode stream 1 fills the even channels
/// and stream 2 the odd ones.
FusionParams aligned_fusion_params(const GroupSpec& spec);

std::string group_id_for(std::size_t group_index);
std::string image_id_for(std::size_t group_index, std::size_t image_index);

// ---- instruction records --------------------------------------------------

enum class QuestionMode { site_cue, no_cue };
enum class QuestionPool { simple, diverse };

std::string to_string(QuestionMode mode);
QuestionMode parse_question_mode(const std::string& text);

struct InstructionRecord {
  std::string question;
  std::vector<std::string> image_ids;
  std::string answer;
  QuestionMode question_mode = QuestionMode::site_cue;
  std::optional<std::string> site;

  /// k >= 1, site present iff site-cue mode, nonempty answer, no
  /// characters that would break the conversation framing.
  void validate() const;
  friend bool operator==(const InstructionRecord&, const InstructionRecord&) = default;
};

/// Chooses question number `variant` (modulo pool size) from the pool for
/// `mode`. Site-cue questions name the site; no-cue questions never do, and
/// the site is then expected in the answer only.
InstructionRecord build_instruction_record(const std::string& caption,
                                           std::vector<std::string> image_ids, QuestionMode mode,
                                           const std::optional<std::string>& site,
                                           QuestionPool pool = QuestionPool::simple,
                                           std::size_t variant = 0);

std::span<const std::string_view> question_templates(QuestionMode mode, QuestionPool pool);

inline constexpr std::string_view kStopToken = "<STOP>";

/// "Human: {question} <img:id1> ... <img:idk><STOP>\nAssistant: {answer}<STOP>\n"
std::string serialize_conversation(const InstructionRecord& record);

struct Conversation {
  std::string question;
  std::vector<std::string> image_ids;
  std::string answer;
  friend bool operator==(const Conversation&, const Conversation&) = default;
};

/// Inverse of serialize_conversation. Throws ParseError on any deviation.
Conversation parse_conversation(std::string_view text);

std::string instructions_to_jsonl(std::span<const InstructionRecord> records);
void write_instructions_jsonl(const std::filesystem::path& path,
                             std::span<const InstructionRecord> records);
/// Unknown fields and malformed lines raise ParseError with the line number.
std::vector<InstructionRecord> read_instructions_jsonl(const std::filesystem::path& path);

/// {"image_id": ..., "features": [[...]]} lines for one encoder stream.
std::string features_to_jsonl(std::span<const std::string> image_ids,
                              std::span<const FeatureMatrix> features);

}  // namespace mmfuse
