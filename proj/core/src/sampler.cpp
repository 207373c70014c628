// SPDX-License-Identifier: Apache-2.0
#include "mmfuse/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "json_io.hpp"
#include "mmfuse/error.hpp"
#include "mmfuse/numcore.hpp"
#include "mmfuse/random.hpp"

namespace mmfuse {

std::size_t RedundantGroup::channels() const {
  return image_features.empty() ? 0 : image_features.front().cols();
}

void RedundantGroup::validate() const {
  if (image_features.size() < 2) {
    throw DomainError("group '" + group_id + "' needs at least 2 images, has " +
                      std::to_string(image_features.size()));
  }
  if (!image_ids.empty() && image_ids.size() != image_features.size()) {
    throw ShapeError("group '" + group_id + "': image id count does not match image count");
  }
  const Matrix& first = image_features.front();
  if (first.rows() == 0 || first.cols() == 0) throw ShapeError("group '" + group_id + "': empty image features");
  for (const auto& m : image_features) {
    if (!m.same_shape(first)) {
      throw ShapeError("group '" + group_id + "': image shapes differ (" + first.shape_string() +
                       " vs " + m.shape_string() + ")");
    }
  }
  if (text_features.cols() != first.cols()) {
    throw ShapeError("group '" + group_id + "': text has " + std::to_string(text_features.cols()) +
                     " channels, images have " + std::to_string(first.cols()));
  }
  if (planted_valid_index && *planted_valid_index >= image_features.size()) {
    throw DomainError("group '" + group_id + "': valid index out of range");
  }
}

std::size_t AttentionScorerParams::key_dim() const {
  return query_weight.empty() ? 0 : query_weight.front().cols();
}

std::size_t AttentionScorerParams::input_dim() const {
  return query_weight.empty() ? 0 : query_weight.front().rows();
}

void AttentionScorerParams::validate() const {
  if (query_weight.empty()) throw ConfigError("attention scorer needs n_layers >= 1");
  if (query_weight.size() != key_weight.size()) {
    throw ShapeError("attention scorer: query and key layer counts differ");
  }
  const std::size_t d = input_dim();
  const std::size_t dk = key_dim();
  if (d == 0 || dk == 0) throw ConfigError("attention scorer needs d >= 1 and d_k >= 1");
  for (std::size_t l = 0; l < query_weight.size(); ++l) {
    if (query_weight[l].rows() != d || query_weight[l].cols() != dk ||
        key_weight[l].rows() != d || key_weight[l].cols() != dk) {
      throw ShapeError("attention layer " + std::to_string(l) + " weights are " +
                       query_weight[l].shape_string() + "/" + key_weight[l].shape_string() +
                       ", expected " + std::to_string(d) + "x" + std::to_string(dk));
    }
  }
}

AttentionScorerParams AttentionScorerParams::aligned(std::size_t d, std::size_t d_k,
                                                     std::size_t n_layers, std::uint64_t seed) {
  if (d == 0 || d_k == 0 || n_layers == 0) {
    throw ConfigError("attention scorer needs d >= 1, d_k >= 1, n_layers >= 1");
  }
  AttentionScorerParams p;
  for (std::size_t l = 0; l < n_layers; ++l) {
    Matrix w(d, d_k);
    if (d_k >= d) {
      for (std::size_t i = 0; i < d; ++i) w(i, i) = 1.0;
    } else {
      Rng rng(derive_seed(seed, "attention-layer-" + std::to_string(l)));
      w = gaussian_matrix(rng, d, d_k, 1.0 / std::sqrt(static_cast<double>(d_k)));
    }
    p.query_weight.push_back(w);
    p.key_weight.push_back(std::move(w));
  }
  return p;
}

ScorerParams ScorerParams::initial(std::size_t d, std::size_t d_k, std::size_t n_layers,
                                   std::uint64_t seed, double w_init_scale) {
  ScorerParams p;
  Rng rng(derive_seed(seed, "scorer-w"));
  p.w = gaussian_vector(rng, d, w_init_scale);
  p.attention = AttentionScorerParams::aligned(d, d_k, n_layers, seed);
  return p;
}

double feature_score(const FeatureMatrix& h_v, std::span<const double> w) {
  if (h_v.cols() != w.size()) {
    throw ShapeError("feature_score: features have " + std::to_string(h_v.cols()) +
                     " channels, w has " + std::to_string(w.size()));
  }
  return dot(mean_rows(h_v), w);
}

double attention_score(const FeatureMatrix& h_v, const FeatureMatrix& h_t,
                       const AttentionScorerParams& params) {
  params.validate();
  if (h_v.cols() != params.input_dim() || h_t.cols() != params.input_dim()) {
    throw ShapeError("attention_score: image " + h_v.shape_string() + " / text " +
                     h_t.shape_string() + " do not match attention input width " +
                     std::to_string(params.input_dim()));
  }
  if (h_v.rows() == 0 || h_t.rows() == 0) throw ShapeError("attention_score: empty features");
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(params.key_dim()));
  Matrix text = h_t;
  for (std::size_t layer = 0;; ++layer) {
    const Matrix q = matmul(text, params.query_weight[layer]);
    const Matrix k = matmul(h_v, params.key_weight[layer]);
    Matrix logits = scale(matmul_nt(q, k), inv_sqrt_dk);  // text tokens x image tokens
    if (layer + 1 == params.n_layers()) {
      double total = 0.0;
      for (std::size_t t = 0; t < logits.rows(); ++t) total += log_sum_exp(logits.row(t));
      return total / static_cast<double>(logits.rows());
    }
    for (std::size_t t = 0; t < logits.rows(); ++t) {
      auto weights = softmax(logits.row(t));
      std::copy(weights.begin(), weights.end(), logits.row(t).begin());
    }
    text = matmul(logits, h_v);
  }
}

ScoreVector score_group(const RedundantGroup& group, const ScorerParams& params, ScoreMode mode) {
  group.validate();
  ScoreVector s;
  s.raw.reserve(group.size());
  for (const auto& image : group.image_features) {
    s.raw.push_back(mode == ScoreMode::feature
                        ? feature_score(image, params.w)
                        : attention_score(image, group.text_features, params.attention));
  }
  return s;
}

std::vector<double> normalize_scores(std::span<const double> raw, double temperature) {
  if (raw.size() < 2) throw DomainError("normalize_scores: need at least 2 scores");
  return softmax(raw, temperature);
}

double adr_loss(std::span<const double> attention_raw, std::span<const double> feature_raw,
                double temperature) {
  if (attention_raw.size() != feature_raw.size()) {
    throw ShapeError("adr_loss: " + std::to_string(attention_raw.size()) + " attention scores vs " +
                     std::to_string(feature_raw.size()) + " feature scores");
  }
  return cross_entropy(normalize_scores(attention_raw, temperature),
                       normalize_scores(feature_raw, temperature));
}

std::size_t select_valid(const ScoreVector& scores) {
  if (scores.raw.size() < 2) throw DomainError("select_valid: need at least 2 scores");
  return argmax(scores.raw);
}

namespace {

// Pooled image features and detached target distribution for one group.
struct PreparedGroup {
  Matrix pooled;  // k x d
  std::vector<double> target;
};

std::vector<PreparedGroup> prepare(std::span<const RedundantGroup> groups,
                                   const ScorerParams& params, double temperature,
                                   DistillationTarget target) {
  std::vector<PreparedGroup> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    g.validate();
    PreparedGroup p;
    if (target == DistillationTarget::attention) {
      p.target = normalize_scores(score_group(g, params, ScoreMode::attention).raw, temperature);
    } else {
      if (!g.planted_valid_index) continue;
      p.target.assign(g.size(), 0.0);
      p.target[*g.planted_valid_index] = 1.0;
    }
    p.pooled = Matrix(g.size(), g.channels());
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto pooled = mean_rows(g.image_features[i]);
      std::copy(pooled.begin(), pooled.end(), p.pooled.row(i).begin());
    }
    out.push_back(std::move(p));
  }
  return out;
}

// Loss of one prepared group; accumulates scale * dL/dw into grad.
double group_loss(const PreparedGroup& g, std::span<const double> w, double temperature,
                  std::vector<double>* grad, double grad_scale) {
  if (g.pooled.cols() != w.size()) {
    throw ShapeError("sampler: features have " + std::to_string(g.pooled.cols()) +
                     " channels, w has " + std::to_string(w.size()));
  }
  std::vector<double> scores(g.pooled.rows());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = dot(g.pooled.row(i), w);
  const auto q = softmax(scores, temperature);
  const double loss = cross_entropy(g.target, q);
  if (grad) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double ds = (q[i] - g.target[i]) / temperature * grad_scale;
      auto row = g.pooled.row(i);
      for (std::size_t j = 0; j < w.size(); ++j) (*grad)[j] += ds * row[j];
    }
  }
  return loss;
}

}  // namespace

double adr_objective(std::span<const RedundantGroup> groups, const ScorerParams& params,
                     double temperature, std::vector<double>* grad_w, DistillationTarget target) {
  const auto prepared = prepare(groups, params, temperature, target);
  if (prepared.empty()) throw DomainError("adr_objective: no usable groups");
  if (grad_w) grad_w->assign(params.w.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(prepared.size());
  double total = 0.0;
  for (const auto& g : prepared) total += group_loss(g, params.w, temperature, grad_w, inv_n);
  return total * inv_n;
}

SamplerTrainResult train_sampler(std::span<const RedundantGroup> groups, ScorerParams params,
                                 const SamplerHyper& hyper) {
  if (groups.empty()) throw DomainError("train_sampler: no training groups");
  if (!(hyper.temperature > 0.0)) throw ConfigError("sampler temperature must be positive");
  if (hyper.batch == 0) throw ConfigError("sampler batch size must be positive");
  const auto prepared = prepare(groups, params, hyper.temperature, hyper.target);
  if (prepared.empty()) throw DomainError("train_sampler: no groups carry usable targets");

  SamplerTrainResult result;
  for (const auto& g : prepared) result.mean_target_entropy += entropy(g.target);
  result.mean_target_entropy /= static_cast<double>(prepared.size());

  Optimizer optimizer(hyper.optimizer);
  const std::size_t batch = std::min(hyper.batch, prepared.size());
  std::vector<double> grad(params.w.size());
  std::size_t cursor = 0;
  result.loss_history.reserve(hyper.steps);
  for (std::size_t step = 0; step < hyper.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch);
    try {
      for (std::size_t b = 0; b < batch; ++b) {
        loss += group_loss(prepared[cursor], params.w, hyper.temperature, &grad,
                           inv_b * hyper.loss_weight);
        cursor = (cursor + 1) % prepared.size();
      }
    } catch (const NumericError& e) {
      throw NumericError(std::string("sampler diverged at step ") + std::to_string(step) + ": " + e.what());
    }
    loss *= inv_b;
    if (!std::isfinite(loss)) {
      throw NumericError("sampler loss is not finite at step " + std::to_string(step));
    }
    result.loss_history.push_back(loss);
    optimizer.update("w", params.w, grad);
  }

  double total = 0.0;
  for (const auto& g : prepared) total += group_loss(g, params.w, hyper.temperature, nullptr, 0.0);
  result.final_train_loss = total / static_cast<double>(prepared.size());
  result.params = std::move(params);
  return result;
}

double selection_accuracy(std::span<const RedundantGroup> groups, const ScorerParams& params,
                          ScoreMode mode) {
  std::size_t labeled = 0;
  std::size_t hits = 0;
  for (const auto& g : groups) {
    if (!g.planted_valid_index) continue;
    ++labeled;
    if (select_valid(score_group(g, params, mode)) == *g.planted_valid_index) ++hits;
  }
  if (labeled == 0) throw DomainError("selection_accuracy: no labeled groups");
  return static_cast<double>(hits) / static_cast<double>(labeled);
}

// ---- serialization -------------------------------------------------------

std::vector<RedundantGroup> read_groups_jsonl(const std::filesystem::path& path) {
  using detail::json;
  std::vector<RedundantGroup> groups;
  detail::for_each_jsonl(path, [&](const json& j, std::size_t line) {
    detail::check_keys(j, {"group_id", "text_features", "images", "valid_index"},
                       {"group_id", "text_features", "images"}, "group", line);
    RedundantGroup g;
    if (!j["group_id"].is_string()) throw ParseError("group_id must be a string", line);
    g.group_id = j["group_id"].get<std::string>();
    g.text_features = detail::matrix_from_json(j["text_features"], "text_features", line);
    if (!j["images"].is_array()) throw ParseError("images must be an array", line);
    for (const auto& image : j["images"]) {
      detail::check_keys(image, {"image_id", "features"}, {"image_id", "features"}, "image", line);
      if (!image["image_id"].is_string()) throw ParseError("image_id must be a string", line);
      g.image_ids.push_back(image["image_id"].get<std::string>());
      g.image_features.push_back(detail::matrix_from_json(image["features"], "features", line));
    }
    if (j.contains("valid_index") && !j["valid_index"].is_null()) {
      if (!j["valid_index"].is_number_unsigned()) {
        throw ParseError("valid_index must be a nonnegative integer or null", line);
      }
      g.planted_valid_index = j["valid_index"].get<std::size_t>();
    }
    try {
      g.validate();
    } catch (const Error& e) {
      throw ParseError(e.what(), line);
    }
    groups.push_back(std::move(g));
  });
  return groups;
}

std::string groups_to_jsonl(std::span<const RedundantGroup> groups) {
  using detail::json;
  std::vector<json> rows;
  rows.reserve(groups.size());
  for (const auto& g : groups) {
    json images = json::array();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::string id = i < g.image_ids.size() ? g.image_ids[i] : g.group_id + "-" + std::to_string(i);
      images.push_back({{"image_id", id}, {"features", detail::matrix_to_json(g.image_features[i])}});
    }
    json row = {{"group_id", g.group_id},
                {"text_features", detail::matrix_to_json(g.text_features)},
                {"images", std::move(images)}};
    row["valid_index"] = g.planted_valid_index ? json(*g.planted_valid_index) : json(nullptr);
    rows.push_back(std::move(row));
  }
  return detail::to_jsonl(rows);
}

std::string scorer_params_to_json(const ScorerParams& params, const ScorerMeta& meta) {
  using detail::json;
  json q = json::array();
  json k = json::array();
  for (std::size_t l = 0; l < params.attention.n_layers(); ++l) {
    q.push_back(detail::matrix_to_json(params.attention.query_weight[l]));
    k.push_back(detail::matrix_to_json(params.attention.key_weight[l]));
  }
  json doc = {{"w", params.w},
              {"attention",
               {{"n_layers", params.attention.n_layers()},
                {"key_dim", params.attention.key_dim()},
                {"trainable", params.attention.trainable},
                {"query_weight", std::move(q)},
                {"key_weight", std::move(k)}}},
              {"meta", {{"seed", meta.seed}, {"steps", meta.steps}}}};
  return doc.dump(2) + "\n";
}

ScorerParams load_scorer_params(const std::filesystem::path& path, ScorerMeta* meta) {
  using detail::json;
  const json doc = detail::parse_json_file(path);
  try {
    detail::check_keys(doc, {"w", "attention", "meta"}, {"w", "attention"}, "scorer checkpoint");
    ScorerParams p;
    p.w = detail::vector_from_json(doc["w"], "w");
    const json& a = doc["attention"];
    detail::check_keys(a, {"n_layers", "key_dim", "trainable", "query_weight", "key_weight"},
                       {"query_weight", "key_weight"}, "attention");
    for (const auto& m : a["query_weight"]) p.attention.query_weight.push_back(detail::matrix_from_json(m, "query_weight"));
    for (const auto& m : a["key_weight"]) p.attention.key_weight.push_back(detail::matrix_from_json(m, "key_weight"));
    p.attention.trainable = a.value("trainable", false);
    p.attention.validate();
    if (a.contains("n_layers") && a["n_layers"].get<std::size_t>() != p.attention.n_layers()) {
      throw ParseError("attention n_layers does not match the stored layers");
    }
    if (p.attention.input_dim() != p.w.size()) {
      throw ParseError("attention input width " + std::to_string(p.attention.input_dim()) +
                       " does not match w length " + std::to_string(p.w.size()));
    }
    if (meta && doc.contains("meta")) {
      meta->seed = doc["meta"].value("seed", std::uint64_t{0});
      meta->steps = doc["meta"].value("steps", std::size_t{0});
    }
    return p;
  } catch (const json::exception& e) {
    throw ParseError("bad scorer checkpoint '" + path.string() + "': " + e.what());
  } catch (const ShapeError& e) {
    throw ParseError("bad scorer checkpoint '" + path.string() + "': " + e.what());
  } catch (const ConfigError& e) {
    throw ParseError("bad scorer checkpoint '" + path.string() + "': " + e.what());
  }
}

}  // namespace mmfuse
