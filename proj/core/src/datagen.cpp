// SPDX-License-Identifier: Apache-2.0
#include "mmfuse/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "json_io.hpp"
#include "mmfuse/error.hpp"
#include "mmfuse/jsonl.hpp"
#include "mmfuse/numcore.hpp"
#include "mmfuse/random.hpp"

namespace mmfuse {

void GroupSpec::validate() const {
  if (k < 2) throw ConfigError("group spec: k must be >= 2, got " + std::to_string(k));
  if (tokens == 0 || text_tokens == 0) throw ConfigError("group spec: token counts must be >= 1");
  if (channels < 3) throw ConfigError("group spec: need at least 3 channels");
  if (!(noise_sigma >= 0.0)) throw ConfigError("group spec: noise_sigma must be >= 0");
  if (!(signal_scale > 0.0)) throw ConfigError("group spec: signal_scale must be > 0");
  if (!(nuisance_scale >= 0.0)) throw ConfigError("group spec: nuisance_scale must be >= 0");
  if (!(shared_cue >= 0.0 && shared_cue <= 1.0)) throw ConfigError("group spec: shared_cue must lie in [0, 1]");
  if (complementary) {
    if (channels % 2 != 0) throw ConfigError("group spec: complementary mode needs an even channel count");
    if (d_enc1 < channels / 2 || d_enc2 < channels / 2) {
      throw ConfigError("group spec: encoder widths must be >= channels/2 in complementary mode");
    }
  } else if (d_enc1 < channels || d_enc2 < channels) {
    throw ConfigError("group spec: encoder widths must be >= channels");
  }
}

namespace {

void normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  if (!(n > 0.0)) throw NumericError("datagen: degenerate direction");
  for (double& x : v) x /= n;
}

// Removes the components along each (orthonormal) basis vector.
void orthogonalize(std::vector<double>& v, std::span<const std::vector<double>> basis) {
  for (const auto& b : basis) {
    const double c = dot(v, b);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * b[i];
  }
}

std::vector<double> random_unit(Rng& rng, std::size_t d, std::span<const std::vector<double>> avoid) {
  auto v = gaussian_vector(rng, d, 1.0);
  orthogonalize(v, avoid);
  normalize(v);
  return v;
}

// Injective signed channel map used by one synthetic encoder: source
// channel i lands on encoder channel target[i] with sign sign[i].
struct ChannelEmbedding {
  std::vector<std::size_t> target;
  std::vector<double> sign;
};

ChannelEmbedding make_embedding(const GroupSpec& spec, int stream, std::size_t sources,
                                std::size_t width) {
  Rng rng(derive_seed(spec.seed, "encoder-embedding-" + std::to_string(stream)));
  std::vector<std::size_t> perm(width);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  ChannelEmbedding e;
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < sources; ++i) {
    e.target.push_back(perm[i]);
    e.sign.push_back(coin(rng) ? 1.0 : -1.0);
  }
  return e;
}

// Latent channels carried by a stream: all of them, or one parity class in
// complementary mode.
std::vector<std::size_t> stream_channels(const GroupSpec& spec, int stream) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < spec.channels; ++c) {
    if (!spec.complementary || static_cast<int>(c % 2) == stream - 1) out.push_back(c);
  }
  return out;
}

FeatureMatrix encode_stream(const GroupSpec& spec, int stream, const Matrix& latent, Rng& rng) {
  const auto channels = stream_channels(spec, stream);
  const std::size_t width = stream == 1 ? spec.d_enc1 : spec.d_enc2;
  const auto embed = make_embedding(spec, stream, channels.size(), width);
  std::vector<bool> used(width, false);
  for (std::size_t t : embed.target) used[t] = true;
  std::normal_distribution<double> noise(0.0, spec.signal_scale * spec.noise_sigma);
  Matrix out(latent.rows(), width);
  for (std::size_t r = 0; r < latent.rows(); ++r) {
    for (std::size_t i = 0; i < channels.size(); ++i) {
      out(r, embed.target[i]) = embed.sign[i] * latent(r, channels[i]);
    }
    for (std::size_t c = 0; c < width; ++c)
      if (!used[c]) out(r, c) = noise(rng);
  }
  return out;
}

}  // namespace

std::vector<double> lesion_direction(const GroupSpec& spec) {
  Rng rng(derive_seed(spec.seed, "lesion-direction"));
  return random_unit(rng, spec.channels, {});
}

std::string group_id_for(std::size_t group_index) {
  std::string digits = std::to_string(group_index);
  if (digits.size() < 5) digits.insert(0, 5 - digits.size(), '0');
  return "g" + digits;
}

std::string image_id_for(std::size_t group_index, std::size_t image_index) {
  return group_id_for(group_index) + "-i" + std::to_string(image_index);
}

FusionParams aligned_fusion_params(const GroupSpec& spec) {
  spec.validate();
  FusionParams params;
  params.alpha_logit = 0.0;
  for (int stream = 1; stream <= 2; ++stream) {
    const auto channels = stream_channels(spec, stream);
    const std::size_t width = stream == 1 ? spec.d_enc1 : spec.d_enc2;
    const auto embed = make_embedding(spec, stream, channels.size(), width);
    ProjectionParams p;
    p.weight = Matrix(width, spec.channels);
    p.bias.assign(spec.channels, 0.0);
    for (std::size_t i = 0; i < channels.size(); ++i) p.weight(embed.target[i], channels[i]) = embed.sign[i];
    (stream == 1 ? params.projection_1 : params.projection_2) = std::move(p);
  }
  return params;
}

GeneratedGroup make_group(const GroupSpec& spec, std::size_t group_index) {
  spec.validate();
  const std::size_t d = spec.channels;
  const double amp = spec.signal_scale;
  Rng rng(derive_seed(spec.seed, "group-" + std::to_string(group_index)));

  const auto cue = lesion_direction(spec);
  const std::vector<std::vector<double>> cue_basis{cue};
  const auto specific = random_unit(rng, d, cue_basis);
  std::vector<double> t(d);
  const double c = spec.shared_cue;
  const double s = std::sqrt(1.0 - c * c);
  for (std::size_t i = 0; i < d; ++i) t[i] = c * cue[i] + s * specific[i];
  const std::vector<std::vector<double>> text_basis{t};
  const std::vector<std::vector<double>> cue_text_basis{cue, specific};  // orthonormal, spans t

  std::uniform_int_distribution<std::size_t> pick(0, spec.k - 1);
  const std::size_t valid = pick(rng);

  GeneratedGroup out;
  out.text_direction = t;
  out.group.group_id = group_id_for(group_index);
  out.group.planted_valid_index = valid;
  const FusionParams fusion = aligned_fusion_params(spec);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);

  std::size_t decoy_rank = 0;
  for (std::size_t i = 0; i < spec.k; ++i) {
    std::vector<double> base;
    if (i == valid) {
      base = t;
    } else {
      auto other = random_unit(rng, d, text_basis);
      if (spec.complementary) {
        // Alternate decoys copy the valid signal on the even (stream 1) or
        // odd (stream 2) channels, so each stream alone cannot separate them.
        const std::size_t copied_parity = decoy_rank % 2;
        base.resize(d);
        for (std::size_t ch = 0; ch < d; ++ch) base[ch] = (ch % 2 == copied_parity) ? t[ch] : other[ch];
      } else {
        base = std::move(other);
      }
      ++decoy_rank;
    }
    auto nuisance = random_unit(rng, d, cue_text_basis);
    Matrix latent(spec.tokens, d);
    for (std::size_t r = 0; r < spec.tokens; ++r) {
      for (std::size_t ch = 0; ch < d; ++ch) {
        latent(r, ch) = amp * (base[ch] + spec.nuisance_scale * nuisance[ch] + noise(rng));
      }
    }
    auto s1 = encode_stream(spec, 1, latent, rng);
    auto s2 = encode_stream(spec, 2, latent, rng);
    out.group.image_ids.push_back(image_id_for(group_index, i));
    out.group.image_features.push_back(fuse_streams(s1, s2, fusion));
    out.stream_1.push_back(std::move(s1));
    out.stream_2.push_back(std::move(s2));
  }

  Matrix text(spec.text_tokens, d);
  for (std::size_t r = 0; r < spec.text_tokens; ++r)
    for (std::size_t ch = 0; ch < d; ++ch) text(r, ch) = amp * (t[ch] + noise(rng));
  out.group.text_features = std::move(text);
  return out;
}

// ---- instruction records --------------------------------------------------

namespace {

constexpr std::array<std::string_view, 1> kSimpleSite{
    "What does this {site} ultrasound image show?"};
constexpr std::array<std::string_view, 5> kDiverseSite{
    "Describe the findings in this {site} ultrasound.",
    "Please provide the diagnosis for this {site} scan.",
    "What abnormality is visible in the {site} ultrasound?",
    "Summarize this {site} examination.",
    "How would you report the {site} images?"};
constexpr std::array<std::string_view, 1> kSimpleNoCue{
    "Provide the diagnosis for this ultrasound image."};
constexpr std::array<std::string_view, 5> kDiverseNoCue{
    "Describe the findings in this ultrasound.",
    "What is the diagnosis for these images?",
    "What abnormality is visible in this scan?",
    "Summarize this examination, including the examined organ.",
    "How would you report these images?"};

void require_clean(const std::string& text, const std::string& what) {
  if (text.find('\n') != std::string::npos || text.find('\r') != std::string::npos ||
      text.find(kStopToken) != std::string::npos) {
    throw DomainError(what + " must not contain newlines or the stop marker");
  }
}

}  // namespace

std::string to_string(QuestionMode mode) { return mode == QuestionMode::site_cue ? "site-cue" : "no-cue"; }

QuestionMode parse_question_mode(const std::string& text) {
  if (text == "site-cue") return QuestionMode::site_cue;
  if (text == "no-cue") return QuestionMode::no_cue;
  throw ParseError("unknown question mode '" + text + "'");
}

std::span<const std::string_view> question_templates(QuestionMode mode, QuestionPool pool) {
  if (mode == QuestionMode::site_cue) {
    if (pool == QuestionPool::simple) return kSimpleSite;
    return kDiverseSite;
  }
  if (pool == QuestionPool::simple) return kSimpleNoCue;
  return kDiverseNoCue;
}

void InstructionRecord::validate() const {
  if (image_ids.empty()) throw DomainError("instruction record needs at least one image");
  if (answer.empty()) throw DomainError("instruction record has an empty answer");
  if (question.empty()) throw DomainError("instruction record has an empty question");
  if ((question_mode == QuestionMode::site_cue) != site.has_value()) {
    throw DomainError("instruction record: site must be present exactly in site-cue mode");
  }
  require_clean(question, "question");
  require_clean(answer, "answer");
  if (question.find("<img:") != std::string::npos) throw DomainError("question must not contain image markers");
  for (const auto& id : image_ids) {
    if (id.empty() || id.find_first_of(" \t\r\n<>") != std::string::npos) {
      throw DomainError("image id '" + id + "' is empty or contains reserved characters");
    }
  }
}

InstructionRecord build_instruction_record(const std::string& caption,
                                           std::vector<std::string> image_ids, QuestionMode mode,
                                           const std::optional<std::string>& site,
                                           QuestionPool pool, std::size_t variant) {
  if (caption.empty()) throw DomainError("build_instruction_record: empty caption");
  if (mode == QuestionMode::site_cue && (!site || site->empty())) {
    throw DomainError("build_instruction_record: site-cue mode needs a site");
  }
  const auto templates = question_templates(mode, pool);
  std::string question(templates[variant % templates.size()]);
  if (mode == QuestionMode::site_cue) {
    const auto at = question.find("{site}");
    question.replace(at, 6, *site);
  }
  InstructionRecord r;
  r.question = std::move(question);
  r.image_ids = std::move(image_ids);
  r.answer = caption;
  r.question_mode = mode;
  if (mode == QuestionMode::site_cue) r.site = site;
  r.validate();
  return r;
}

std::string serialize_conversation(const InstructionRecord& record) {
  if (record.answer.empty()) throw DomainError("serialize_conversation: empty answer");
  record.validate();
  std::string out = "Human: " + record.question;
  for (const auto& id : record.image_ids) out += " <img:" + id + ">";
  out += kStopToken;
  out += "\nAssistant: " + record.answer;
  out += kStopToken;
  out += "\n";
  return out;
}

Conversation parse_conversation(std::string_view text) {
  constexpr std::string_view human = "Human: ";
  constexpr std::string_view assistant = "\nAssistant: ";
  if (text.substr(0, human.size()) != human) throw ParseError("conversation must start with 'Human: '");
  const auto first_stop = text.find(kStopToken);
  if (first_stop == std::string_view::npos) throw ParseError("missing stop marker after question");
  std::string_view turn = text.substr(human.size(), first_stop - human.size());
  std::string_view rest = text.substr(first_stop + kStopToken.size());
  if (rest.substr(0, assistant.size()) != assistant) throw ParseError("missing Assistant turn");
  rest.remove_prefix(assistant.size());
  const std::string suffix = std::string(kStopToken) + "\n";
  if (rest.size() < suffix.size() || rest.substr(rest.size() - suffix.size()) != suffix) {
    throw ParseError("conversation must end with the stop marker and a newline");
  }
  Conversation c;
  c.answer = std::string(rest.substr(0, rest.size() - suffix.size()));
  if (c.answer.empty() || c.answer.find(kStopToken) != std::string::npos ||
      c.answer.find('\n') != std::string::npos) {
    throw ParseError("malformed answer");
  }
  // Image references are trailing " <img:ID>" groups.
  while (!turn.empty() && turn.back() == '>') {
    const auto open = turn.rfind(" <img:");
    if (open == std::string_view::npos) break;
    std::string_view id = turn.substr(open + 6, turn.size() - open - 7);
    if (id.empty() || id.find_first_of(" <>") != std::string_view::npos) throw ParseError("malformed image reference");
    c.image_ids.insert(c.image_ids.begin(), std::string(id));
    turn = turn.substr(0, open);
  }
  if (c.image_ids.empty()) throw ParseError("conversation lists no images");
  if (turn.empty()) throw ParseError("empty question");
  c.question = std::string(turn);
  return c;
}

std::string instructions_to_jsonl(std::span<const InstructionRecord> records) {
  using detail::json;
  std::vector<json> rows;
  for (const auto& r : records) {
    r.validate();
    json row = {{"question", r.question},
                {"image_ids", r.image_ids},
                {"answer", r.answer},
                {"question_mode", to_string(r.question_mode)}};
    row["site"] = r.site ? json(*r.site) : json(nullptr);
    rows.push_back(std::move(row));
  }
  return detail::to_jsonl(rows);
}

void write_instructions_jsonl(const std::filesystem::path& path,
                              std::span<const InstructionRecord> records) {
  write_text_file_atomic(path, instructions_to_jsonl(records));
}

std::vector<InstructionRecord> read_instructions_jsonl(const std::filesystem::path& path) {
  using detail::json;
  std::vector<InstructionRecord> out;
  detail::for_each_jsonl(path, [&](const json& j, std::size_t line) {
    detail::check_keys(j, {"question", "image_ids", "answer", "question_mode", "site"},
                       {"question", "image_ids", "answer", "question_mode"}, "instruction record",
                       line);
    InstructionRecord r;
    r.question = j.at("question").get<std::string>();
    r.image_ids = j.at("image_ids").get<std::vector<std::string>>();
    r.answer = j.at("answer").get<std::string>();
    try {
      r.question_mode = parse_question_mode(j.at("question_mode").get<std::string>());
      if (j.contains("site") && !j["site"].is_null()) r.site = j["site"].get<std::string>();
      r.validate();
    } catch (const Error& e) {
      throw ParseError(e.what(), line);
    }
    out.push_back(std::move(r));
  });
  return out;
}

std::string features_to_jsonl(std::span<const std::string> image_ids,
                              std::span<const FeatureMatrix> features) {
  using detail::json;
  if (image_ids.size() != features.size()) throw ShapeError("features_to_jsonl: id/feature count mismatch");
  std::vector<json> rows;
  rows.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    rows.push_back({{"image_id", image_ids[i]}, {"features", detail::matrix_to_json(features[i])}});
  }
  return detail::to_jsonl(rows);
}

}  // namespace mmfuse
