// SPDX-License-Identifier: Apache-2.0
#include "mmfuse/toylm.hpp"

#include <algorithm>
#include <cmath>

#include "json_io.hpp"
#include "mmfuse/error.hpp"
#include "mmfuse/metrics.hpp"
#include "mmfuse/numcore.hpp"
#include "mmfuse/random.hpp"

namespace mmfuse {

namespace names = toylm_names;

void LowRankAdapter::validate(std::size_t d_in, std::size_t d_out) const {
  if (a.rows() != d_in || b.cols() != d_out || a.cols() != b.rows()) {
    throw ShapeError("adapter factors " + a.shape_string() + " and " + b.shape_string() +
                     " do not compose to " + std::to_string(d_in) + "x" + std::to_string(d_out));
  }
  if (rank() == 0 || rank() >= std::min(d_in, d_out)) {
    throw ConfigError("adapter rank " + std::to_string(rank()) + " must lie in [1, min(" +
                      std::to_string(d_in) + ", " + std::to_string(d_out) + "))");
  }
}

Matrix apply_low_rank_adapter(const Matrix& w, const LowRankAdapter& adapter) {
  if (adapter.a.rows() != w.rows() || adapter.b.cols() != w.cols() ||
      adapter.a.cols() != adapter.b.rows()) {
    throw ShapeError("apply_low_rank_adapter: factors " + adapter.a.shape_string() + " x " +
                     adapter.b.shape_string() + " do not match weight " + w.shape_string());
  }
  Matrix out = w;
  axpy(out, adapter.scale, matmul(adapter.a, adapter.b));
  return out;
}

// ---- parameters ------------------------------------------------------------

ToyLMParams ToyLMParams::init(const ToyLMConfig& config, std::uint64_t seed) {
  if (config.vocab_size < 2 || config.embed_dim == 0 || config.key_dim == 0 || config.visual_dim == 0) {
    throw ConfigError("toy LM needs vocab >= 2 and positive embed/key/visual dimensions");
  }
  ToyLMParams p;
  p.vocab_size = config.vocab_size;
  p.embed_dim = config.embed_dim;
  p.key_dim = config.key_dim;
  p.visual_dim = config.visual_dim;
  const double e = static_cast<double>(config.embed_dim);
  Rng rng(derive_seed(seed, "toylm"));
  p.weights[names::kTokenEmbedding] = gaussian_matrix(rng, config.vocab_size, config.embed_dim, 1.0);
  p.weights[names::kContextWeight] =
      gaussian_matrix(rng, config.visual_dim, config.embed_dim, 1.0 / std::sqrt(static_cast<double>(config.visual_dim)));
  p.weights[names::kContextBias] = Matrix(1, config.embed_dim);
  p.weights[names::kAttnQuery] = gaussian_matrix(rng, config.embed_dim, config.key_dim, 1.0 / std::sqrt(e));
  p.weights[names::kAttnKey] = gaussian_matrix(rng, config.embed_dim, config.key_dim, 1.0 / std::sqrt(e));
  p.weights[names::kOutputWeight] = gaussian_matrix(rng, config.embed_dim, config.vocab_size, 1.0 / std::sqrt(e));
  for (const auto& target : config.adapter_targets) {
    auto it = p.weights.find(target);
    if (it == p.weights.end() || target == names::kContextBias) {
      throw ConfigError("cannot attach an adapter to '" + target + "'");
    }
    LowRankAdapter adapter;
    adapter.a = gaussian_matrix(rng, it->second.rows(), config.adapter_rank,
                                1.0 / std::sqrt(static_cast<double>(it->second.rows())));
    adapter.b = Matrix(config.adapter_rank, it->second.cols());
    adapter.scale = config.adapter_scale;
    adapter.validate(it->second.rows(), it->second.cols());
    p.adapters[target] = std::move(adapter);
  }
  p.freeze_spec = default_freeze_spec();
  return p;
}

std::vector<std::string> ToyLMParams::parameter_names() const {
  std::vector<std::string> out;
  for (const auto& [name, w] : weights) out.push_back(name);
  for (const auto& [base, a] : adapters) {
    out.push_back(base + ".lora_a");
    out.push_back(base + ".lora_b");
  }
  return out;
}

namespace {

// Splits "<base>.lora_a" into (base, 'a'); returns false for base weights.
bool split_adapter_name(const std::string& name, std::string& base, char& which) {
  for (const char* suffix : {".lora_a", ".lora_b"}) {
    const std::string s(suffix);
    if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) {
      base = name.substr(0, name.size() - s.size());
      which = s.back();
      return true;
    }
  }
  return false;
}

}  // namespace

Matrix& ToyLMParams::parameter(const std::string& name) {
  return const_cast<Matrix&>(std::as_const(*this).parameter(name));
}

const Matrix& ToyLMParams::parameter(const std::string& name) const {
  std::string base;
  char which = 0;
  if (split_adapter_name(name, base, which)) {
    auto it = adapters.find(base);
    if (it != adapters.end()) return which == 'a' ? it->second.a : it->second.b;
  }
  auto it = weights.find(name);
  if (it == weights.end()) throw ConfigError("unknown toy LM parameter '" + name + "'");
  return it->second;
}

Matrix ToyLMParams::effective(const std::string& base) const {
  auto it = adapters.find(base);
  const Matrix& w = parameter(base);
  return it == adapters.end() ? w : apply_low_rank_adapter(w, it->second);
}

void ToyLMParams::validate() const {
  const auto expect = [&](const char* name, std::size_t r, std::size_t c) {
    auto it = weights.find(name);
    if (it == weights.end()) throw ConfigError(std::string("toy LM is missing '") + name + "'");
    if (it->second.rows() != r || it->second.cols() != c) {
      throw ShapeError(std::string("toy LM weight '") + name + "' is " + it->second.shape_string() +
                       ", expected " + std::to_string(r) + "x" + std::to_string(c));
    }
  };
  expect(names::kTokenEmbedding, vocab_size, embed_dim);
  expect(names::kContextWeight, visual_dim, embed_dim);
  expect(names::kContextBias, 1, embed_dim);
  expect(names::kAttnQuery, embed_dim, key_dim);
  expect(names::kAttnKey, embed_dim, key_dim);
  expect(names::kOutputWeight, embed_dim, vocab_size);
  if (weights.size() != 6) throw ConfigError("toy LM has unexpected weights");
  for (const auto& [base, adapter] : adapters) {
    auto it = weights.find(base);
    if (it == weights.end()) throw ConfigError("adapter attached to unknown weight '" + base + "'");
    adapter.validate(it->second.rows(), it->second.cols());
  }
}

std::set<std::string> default_freeze_spec() {
  return {names::kTokenEmbedding, names::kAttnQuery, names::kAttnKey, names::kOutputWeight};
}

std::vector<std::string> trainable_parameters(const ToyLMParams& params) {
  const auto all = params.parameter_names();
  for (const auto& frozen : params.freeze_spec) {
    if (std::find(all.begin(), all.end(), frozen) == all.end()) {
      throw ConfigError("freeze spec names unknown parameter '" + frozen + "'");
    }
  }
  std::vector<std::string> out;
  for (const auto& name : all)
    if (!params.freeze_spec.count(name)) out.push_back(name);
  return out;
}

// ---- forward / backward ---------------------------------------------------

namespace {

struct EffectiveWeights {
  Matrix embedding;
  Matrix context_weight;
  Matrix context_bias;
  Matrix query;
  Matrix key;
  Matrix output;
};

EffectiveWeights effective_weights(const ToyLMParams& p) {
  p.validate();
  return {p.effective(names::kTokenEmbedding), p.effective(names::kContextWeight),
          p.effective(names::kContextBias),    p.effective(names::kAttnQuery),
          p.effective(names::kAttnKey),        p.effective(names::kOutputWeight)};
}

void check_ids(const TokenSequence& ids, std::size_t vocab, const char* what) {
  for (std::size_t id : ids) {
    if (id >= vocab) {
      throw DomainError(std::string(what) + " token id " + std::to_string(id) +
                        " outside vocabulary of size " + std::to_string(vocab));
    }
  }
}

// Activations of one prediction step.
struct StepCache {
  std::vector<double> pooled;       // d
  std::vector<std::size_t> row_ids;  // token id behind rows 1..n-1
  Matrix x;                          // n x E, row 0 is the visual context
  Matrix keys;                       // n x d_k
  std::vector<double> query;         // d_k
  std::vector<double> attn;          // n
  std::vector<double> hidden;        // E
  std::vector<double> probs;         // V
};

StepCache forward_step(const EffectiveWeights& w, const std::vector<double>& pooled,
                       const TokenSequence& instruction, const TokenSequence& prefix,
                       std::size_t prefix_len) {
  StepCache c;
  c.pooled = pooled;
  const std::size_t e = w.embedding.cols();
  const std::size_t n = 1 + instruction.size() + prefix_len;
  c.x = Matrix(n, e);
  {
    auto ctx = c.x.row(0);
    for (std::size_t j = 0; j < e; ++j) ctx[j] = w.context_bias(0, j);
    for (std::size_t i = 0; i < pooled.size(); ++i) {
      auto wr = w.context_weight.row(i);
      for (std::size_t j = 0; j < e; ++j) ctx[j] += pooled[i] * wr[j];
    }
  }
  std::size_t r = 1;
  const auto put = [&](std::size_t id) {
    auto src = w.embedding.row(id);
    std::copy(src.begin(), src.end(), c.x.row(r).begin());
    c.row_ids.push_back(id);
    ++r;
  };
  for (std::size_t id : instruction) put(id);
  for (std::size_t l = 0; l < prefix_len; ++l) put(prefix[l]);

  const auto last = c.x.row(n - 1);
  const std::size_t dk = w.query.cols();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  c.query.assign(dk, 0.0);
  for (std::size_t i = 0; i < e; ++i) {
    auto qr = w.query.row(i);
    for (std::size_t j = 0; j < dk; ++j) c.query[j] += last[i] * qr[j];
  }
  c.keys = matmul(c.x, w.key);
  std::vector<double> logits(n);
  for (std::size_t t = 0; t < n; ++t) logits[t] = dot(c.keys.row(t), c.query) * inv_sqrt_dk;
  c.attn = softmax(logits);
  c.hidden.assign(last.begin(), last.end());
  for (std::size_t t = 0; t < n; ++t) {
    auto xr = c.x.row(t);
    for (std::size_t j = 0; j < e; ++j) c.hidden[j] += c.attn[t] * xr[j];
  }
  std::vector<double> out(w.output.cols(), 0.0);
  for (std::size_t i = 0; i < e; ++i) {
    auto orow = w.output.row(i);
    for (std::size_t v = 0; v < out.size(); ++v) out[v] += c.hidden[i] * orow[v];
  }
  c.probs = softmax(out);
  return c;
}

struct EffectiveGrads {
  Matrix embedding, context_weight, context_bias, query, key, output;

  explicit EffectiveGrads(const EffectiveWeights& w)
      : embedding(w.embedding.rows(), w.embedding.cols()),
        context_weight(w.context_weight.rows(), w.context_weight.cols()),
        context_bias(1, w.context_bias.cols()),
        query(w.query.rows(), w.query.cols()),
        key(w.key.rows(), w.key.cols()),
        output(w.output.rows(), w.output.cols()) {}
};

// Backpropagates dLoss/dlogits (= weight * (probs - onehot(target))).
void backward_step(const EffectiveWeights& w, const StepCache& c, std::size_t target, double weight,
                   EffectiveGrads& g) {
  const std::size_t e = w.embedding.cols();
  const std::size_t n = c.x.rows();
  const std::size_t dk = w.query.cols();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  std::vector<double> dlogits(c.probs.size());
  for (std::size_t v = 0; v < dlogits.size(); ++v) dlogits[v] = weight * (c.probs[v] - (v == target ? 1.0 : 0.0));

  std::vector<double> dh(e, 0.0);
  for (std::size_t i = 0; i < e; ++i) {
    auto orow = w.output.row(i);
    auto grow = g.output.row(i);
    for (std::size_t v = 0; v < dlogits.size(); ++v) {
      grow[v] += c.hidden[i] * dlogits[v];
      dh[i] += orow[v] * dlogits[v];
    }
  }

  Matrix dx(n, e);
  std::vector<double> dlast = dh;
  std::vector<double> da(n);
  for (std::size_t t = 0; t < n; ++t) {
    auto dxr = dx.row(t);
    for (std::size_t j = 0; j < e; ++j) dxr[j] += c.attn[t] * dh[j];
    da[t] = dot(dh, c.x.row(t));
  }
  const double mean_da = dot(c.attn, da);
  std::vector<double> dq(dk, 0.0);
  Matrix dkeys(n, dk);
  for (std::size_t t = 0; t < n; ++t) {
    const double ds = c.attn[t] * (da[t] - mean_da) * inv_sqrt_dk;
    auto kr = c.keys.row(t);
    auto dkr = dkeys.row(t);
    for (std::size_t j = 0; j < dk; ++j) {
      dq[j] += ds * kr[j];
      dkr[j] = ds * c.query[j];
    }
  }
  axpy(g.key, 1.0, matmul_tn(c.x, dkeys));
  axpy(dx, 1.0, matmul_nt(dkeys, w.key));

  const auto last = c.x.row(n - 1);
  for (std::size_t i = 0; i < e; ++i) {
    auto gq = g.query.row(i);
    auto wq = w.query.row(i);
    for (std::size_t j = 0; j < dk; ++j) {
      gq[j] += last[i] * dq[j];
      dlast[i] += wq[j] * dq[j];
    }
  }
  for (std::size_t j = 0; j < e; ++j) dx(n - 1, j) += dlast[j];

  auto dctx = dx.row(0);
  for (std::size_t j = 0; j < e; ++j) g.context_bias(0, j) += dctx[j];
  for (std::size_t i = 0; i < c.pooled.size(); ++i) {
    auto gr = g.context_weight.row(i);
    for (std::size_t j = 0; j < e; ++j) gr[j] += c.pooled[i] * dctx[j];
  }
  for (std::size_t t = 1; t < n; ++t) {
    auto gr = g.embedding.row(c.row_ids[t - 1]);
    auto dxr = dx.row(t);
    for (std::size_t j = 0; j < e; ++j) gr[j] += dxr[j];
  }
}

std::vector<double> pooled_visual(const ToyLMParams& p, const FeatureMatrix& visual) {
  if (visual.cols() != p.visual_dim) {
    throw ShapeError("toy LM: visual features have " + std::to_string(visual.cols()) +
                     " channels, context projection expects " + std::to_string(p.visual_dim));
  }
  return mean_rows(visual);
}

// Loss of one example (mean per-token CE); accumulates weight-scaled grads.
double example_loss(const ToyLMParams& p, const EffectiveWeights& w, const LMExample& ex,
                    double weight, EffectiveGrads* g) {
  if (ex.answer.empty()) throw DomainError("toy LM: answer must contain at least one token");
  check_ids(ex.instruction, p.vocab_size, "instruction");
  check_ids(ex.answer, p.vocab_size, "answer");
  const auto pooled = pooled_visual(p, ex.visual);
  const double inv_len = 1.0 / static_cast<double>(ex.answer.size());
  double loss = 0.0;
  for (std::size_t l = 0; l < ex.answer.size(); ++l) {
    const auto cache = forward_step(w, pooled, ex.instruction, ex.answer, l);
    loss -= std::log(std::max(cache.probs[ex.answer[l]], 1e-300));
    if (g) backward_step(w, cache, ex.answer[l], weight * inv_len, *g);
  }
  return loss * inv_len;
}

}  // namespace

std::vector<double> next_token_dist(const ToyLMParams& params, const FeatureMatrix& visual,
                                    const TokenSequence& instruction, const TokenSequence& prefix) {
  check_ids(instruction, params.vocab_size, "instruction");
  check_ids(prefix, params.vocab_size, "prefix");
  const auto w = effective_weights(params);
  return forward_step(w, pooled_visual(params, visual), instruction, prefix, prefix.size()).probs;
}

double sequence_log_prob(const ToyLMParams& params, const FeatureMatrix& visual,
                         const TokenSequence& instruction, const TokenSequence& answer) {
  if (answer.empty()) throw DomainError("sequence_log_prob: answer must contain at least one token");
  check_ids(instruction, params.vocab_size, "instruction");
  check_ids(answer, params.vocab_size, "answer");
  const auto w = effective_weights(params);
  const auto pooled = pooled_visual(params, visual);
  double total = 0.0;
  for (std::size_t l = 0; l < answer.size(); ++l) {
    total += std::log(forward_step(w, pooled, instruction, answer, l).probs[answer[l]]);
  }
  return total;
}

double teacher_forced_loss(const ToyLMParams& params, std::span<const LMExample> batch) {
  if (batch.empty()) throw DomainError("teacher_forced_loss: empty batch");
  const auto w = effective_weights(params);
  double total = 0.0;
  for (const auto& ex : batch) total += example_loss(params, w, ex, 0.0, nullptr);
  return total / static_cast<double>(batch.size());
}

double teacher_forced_loss_and_grad(const ToyLMParams& params, std::span<const LMExample> batch,
                                    NamedGrads& grads) {
  if (batch.empty()) throw DomainError("teacher_forced_loss: empty batch");
  const auto w = effective_weights(params);
  EffectiveGrads g(w);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& ex : batch) total += example_loss(params, w, ex, inv_b, &g);

  grads.clear();
  const std::pair<const char*, Matrix*> effective[] = {
      {names::kTokenEmbedding, &g.embedding}, {names::kContextWeight, &g.context_weight},
      {names::kContextBias, &g.context_bias}, {names::kAttnQuery, &g.query},
      {names::kAttnKey, &g.key},              {names::kOutputWeight, &g.output}};
  for (const auto& [name, dw] : effective) {
    grads[name] = *dw;
    auto it = params.adapters.find(name);
    if (it != params.adapters.end()) {
      const auto& ad = it->second;
      grads[std::string(name) + ".lora_a"] = scale(matmul_nt(*dw, ad.b), ad.scale);
      grads[std::string(name) + ".lora_b"] = scale(matmul_tn(ad.a, *dw), ad.scale);
    }
  }
  return total * inv_b;
}

LMTrainResult train_two_stage(std::span<const LMExample> stage1, std::span<const LMExample> stage2,
                              ToyLMParams params, const LMTrainHyper& hyper) {
  if (stage1.empty()) throw DomainError("train_two_stage: stage 1 has no records");
  const auto trainable = trainable_parameters(params);
  Optimizer optimizer(hyper.optimizer);
  LMTrainResult result;
  NamedGrads grads;
  std::span<const LMExample> last_stage = stage1;
  for (int stage = 1; stage <= 2; ++stage) {
    const auto data = stage == 1 ? stage1 : stage2;
    const std::size_t steps = stage == 1 ? hyper.stage1_steps : hyper.stage2_steps;
    if (data.empty()) continue;
    last_stage = data;
    const std::size_t batch = hyper.batch == 0 ? data.size() : std::min(hyper.batch, data.size());
    std::size_t cursor = 0;
    std::vector<LMExample> window;
    for (std::size_t step = 0; step < steps; ++step) {
      std::span<const LMExample> view = data;
      if (batch < data.size()) {
        window.clear();
        for (std::size_t b = 0; b < batch; ++b) {
          window.push_back(data[cursor]);
          cursor = (cursor + 1) % data.size();
        }
        view = window;
      }
      double loss = 0.0;
      try {
        loss = teacher_forced_loss_and_grad(params, view, grads);
      } catch (const NumericError& e) {
        throw NumericError("toy LM diverged at stage " + std::to_string(stage) + " step " +
                           std::to_string(step) + ": " + e.what());
      }
      if (!std::isfinite(loss)) {
        throw NumericError("toy LM loss is not finite at stage " + std::to_string(stage) +
                           " step " + std::to_string(step));
      }
      result.history.push_back({stage, step, loss});
      for (const auto& name : trainable) {
        optimizer.update(name, params.parameter(name).data(), grads.at(name).data());
      }
    }
  }
  result.final_loss = teacher_forced_loss(params, last_stage);
  result.params = std::move(params);
  return result;
}

TokenSequence greedy_decode(const ToyLMParams& params, const FeatureMatrix& visual,
                            const TokenSequence& instruction, std::size_t max_len,
                            std::size_t stop_id) {
  check_ids(instruction, params.vocab_size, "instruction");
  const auto w = effective_weights(params);
  const auto pooled = pooled_visual(params, visual);
  TokenSequence out;
  while (out.size() < max_len) {
    const auto probs = forward_step(w, pooled, instruction, out, out.size()).probs;
    const std::size_t next = argmax(probs);
    if (next == stop_id) break;
    out.push_back(next);
  }
  return out;
}

// ---- vocabulary -------------------------------------------------------------

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], i).second) {
      throw ConfigError("duplicate vocabulary token '" + v.tokens_[i] + "'");
    }
  }
  return v;
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, std::size_t vocab_size) {
  if (vocab_size < 2) throw ConfigError("vocabulary needs room for <unk> and <stop>");
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts)
    for (auto& tok : tokenize(t)) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{"<unk>", "<stop>"};
  for (const auto& [tok, n] : ranked) {
    if (tokens.size() >= vocab_size) break;
    tokens.push_back(tok);
  }
  return from_tokens(std::move(tokens));
}

TokenSequence Vocabulary::encode(std::string_view text, bool append_stop) const {
  TokenSequence ids;
  for (const auto& tok : tokenize(text)) {
    auto it = index_.find(tok);
    ids.push_back(it == index_.end() ? kUnk : it->second);
  }
  if (append_stop) ids.push_back(kStop);
  return ids;
}

std::string Vocabulary::decode(const TokenSequence& ids) const {
  std::string out;
  for (std::size_t id : ids) {
    if (id == kStop) break;
    if (!out.empty()) out += ' ';
    out += id < tokens_.size() ? tokens_[id] : tokens_[kUnk];
  }
  return out;
}

// ---- checkpoints ------------------------------------------------------------

std::string toylm_to_json(const ToyLMParams& params, const Vocabulary* vocabulary) {
  using detail::json;
  json weights = json::object();
  for (const auto& [name, w] : params.weights) weights[name] = detail::matrix_to_json(w);
  json adapters = json::object();
  for (const auto& [base, a] : params.adapters) {
    adapters[base] = {{"a", detail::matrix_to_json(a.a)},
                      {"b", detail::matrix_to_json(a.b)},
                      {"rank", a.rank()},
                      {"scale", a.scale}};
  }
  json doc = {{"config",
               {{"vocab_size", params.vocab_size},
                {"embed_dim", params.embed_dim},
                {"key_dim", params.key_dim},
                {"visual_dim", params.visual_dim}}},
              {"weights", std::move(weights)},
              {"adapters", std::move(adapters)},
              {"freeze_spec", std::vector<std::string>(params.freeze_spec.begin(), params.freeze_spec.end())}};
  if (vocabulary) doc["vocabulary"] = vocabulary->tokens();
  return doc.dump(2) + "\n";
}

ToyLMParams load_toylm(const std::filesystem::path& path, Vocabulary* vocabulary) {
  using detail::json;
  const json doc = detail::parse_json_file(path);
  try {
    detail::check_keys(doc, {"config", "weights", "adapters", "freeze_spec", "vocabulary"},
                       {"config", "weights"}, "toy LM checkpoint");
    ToyLMParams p;
    const json& cfg = doc["config"];
    p.vocab_size = cfg.at("vocab_size").get<std::size_t>();
    p.embed_dim = cfg.at("embed_dim").get<std::size_t>();
    p.key_dim = cfg.at("key_dim").get<std::size_t>();
    p.visual_dim = cfg.at("visual_dim").get<std::size_t>();
    for (const auto& [name, m] : doc["weights"].items()) p.weights[name] = detail::matrix_from_json(m, name);
    if (doc.contains("adapters")) {
      for (const auto& [base, a] : doc["adapters"].items()) {
        LowRankAdapter ad;
        ad.a = detail::matrix_from_json(a.at("a"), base + ".lora_a");
        ad.b = detail::matrix_from_json(a.at("b"), base + ".lora_b");
        ad.scale = a.value("scale", 1.0);
        p.adapters[base] = std::move(ad);
      }
    }
    if (doc.contains("freeze_spec")) {
      for (const auto& name : doc["freeze_spec"]) p.freeze_spec.insert(name.get<std::string>());
    }
    p.validate();
    trainable_parameters(p);
    if (vocabulary && doc.contains("vocabulary")) {
      *vocabulary = Vocabulary::from_tokens(doc["vocabulary"].get<std::vector<std::string>>());
    }
    return p;
  } catch (const json::exception& e) {
    throw ParseError("bad toy LM checkpoint '" + path.string() + "': " + e.what());
  }
}

}  // namespace mmfuse
