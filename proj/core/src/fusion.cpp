// SPDX-License-Identifier: Apache-2.0
#include "mmfuse/fusion.hpp"

#include <cmath>

#include "json_io.hpp"
#include "mmfuse/error.hpp"
#include "mmfuse/numcore.hpp"
#include "mmfuse/random.hpp"

namespace mmfuse {

void ProjectionParams::validate() const {
  if (bias.size() != weight.cols()) {
    throw ShapeError("projection bias length " + std::to_string(bias.size()) +
                     " does not match weight " + weight.shape_string());
  }
  weight.require_finite("projection weight");
  Matrix::row_vector(bias);  // finiteness check
}

double FusionParams::alpha() const { return sigmoid(alpha_logit); }

void FusionParams::validate() const {
  projection_1.validate();
  projection_2.validate();
  if (projection_1.output_dim() != projection_2.output_dim()) {
    throw ShapeError("fusion projections disagree on output width: " +
                     std::to_string(projection_1.output_dim()) + " vs " +
                     std::to_string(projection_2.output_dim()));
  }
}

EncoderStub EncoderStub::synthetic(std::size_t token_count, std::size_t channels,
                                   std::uint64_t seed) {
  if (token_count == 0 || channels == 0) throw ConfigError("encoder stub needs m >= 1 and d >= 1");
  EncoderStub stub;
  stub.kind_ = Kind::synthetic_gaussian;
  stub.token_count_ = token_count;
  stub.channels_ = channels;
  stub.seed_ = seed;
  return stub;
}

EncoderStub EncoderStub::from_records(std::map<std::string, FeatureMatrix> records) {
  EncoderStub stub;
  stub.kind_ = Kind::file_backed;
  bool first = true;
  for (const auto& [id, m] : records) {
    if (first) {
      stub.token_count_ = m.rows();
      stub.channels_ = m.cols();
      first = false;
    } else if (m.cols() != stub.channels_) {
      throw ShapeError("encoder record '" + id + "' has " + std::to_string(m.cols()) +
                       " channels, expected " + std::to_string(stub.channels_));
    }
  }
  stub.records_ = std::move(records);
  return stub;
}

EncoderStub EncoderStub::from_jsonl(const std::filesystem::path& path) {
  std::map<std::string, FeatureMatrix> records;
  detail::for_each_jsonl(path, [&](const detail::json& j, std::size_t line) {
    detail::check_keys(j, {"image_id", "features"}, {"image_id", "features"}, "feature record",
                       line);
    if (!j["image_id"].is_string()) throw ParseError("image_id must be a string", line);
    auto id = j["image_id"].get<std::string>();
    auto features = detail::matrix_from_json(j["features"], "features", line);
    if (!records.emplace(id, std::move(features)).second) {
      throw ParseError("duplicate image_id '" + id + "'", line);
    }
  });
  return from_records(std::move(records));
}

FeatureMatrix EncoderStub::encode(const std::string& image_id) const {
  if (kind_ == Kind::file_backed) {
    auto it = records_.find(image_id);
    if (it == records_.end()) throw LookupError("no encoder features for image '" + image_id + "'");
    return it->second;
  }
  Rng rng(derive_seed(seed_, image_id));
  return gaussian_matrix(rng, token_count_, channels_, 1.0);
}

FeatureMatrix project(const FeatureMatrix& features, const ProjectionParams& params) {
  if (features.cols() != params.weight.rows()) {
    throw ShapeError("project: features " + features.shape_string() +
                     " do not match projection weight " + params.weight.shape_string());
  }
  return add_row_bias(matmul(features, params.weight), params.bias);
}

FeatureMatrix fuse(const FeatureMatrix& h1, const FeatureMatrix& h2, const FusionParams& params) {
  if (!h1.same_shape(h2)) {
    throw ShapeError("fuse: stream shapes differ " + h1.shape_string() + " vs " +
                     h2.shape_string());
  }
  const double alpha = params.alpha();
  Matrix out(h1.rows(), h1.cols());
  auto o = out.data();
  auto a = h1.data();
  auto b = h2.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = alpha * a[i] + (1.0 - alpha) * b[i];
  return out;
}

FeatureMatrix fuse_streams(const FeatureMatrix& stream_1, const FeatureMatrix& stream_2,
                           const FusionParams& params) {
  return fuse(project(stream_1, params.projection_1), project(stream_2, params.projection_2),
              params);
}

namespace {

ProjectionGrads projection_backward(const FeatureMatrix& input, const ProjectionParams& params,
                                    const Matrix& d_out, Matrix& d_input) {
  ProjectionGrads g;
  g.weight = matmul_tn(input, d_out);
  g.bias.assign(d_out.cols(), 0.0);
  for (std::size_t i = 0; i < d_out.rows(); ++i) {
    auto r = d_out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) g.bias[j] += r[j];
  }
  d_input = matmul_nt(d_out, params.weight);
  return g;
}

}  // namespace

FusionGrads fusion_backward(const FeatureMatrix& stream_1, const FeatureMatrix& stream_2,
                            const FusionParams& params, const FeatureMatrix& upstream) {
  const Matrix h1 = project(stream_1, params.projection_1);
  const Matrix h2 = project(stream_2, params.projection_2);
  if (!h1.same_shape(h2) || !upstream.same_shape(h1)) {
    throw ShapeError("fusion_backward: upstream " + upstream.shape_string() +
                     " does not match fused shape " + h1.shape_string() + "/" +
                     h2.shape_string());
  }
  const double alpha = params.alpha();
  FusionGrads g;
  double d_alpha = 0.0;
  auto u = upstream.data();
  auto a = h1.data();
  auto b = h2.data();
  for (std::size_t i = 0; i < u.size(); ++i) d_alpha += u[i] * (a[i] - b[i]);
  g.alpha_logit = alpha * (1.0 - alpha) * d_alpha;

  g.projection_1 = projection_backward(stream_1, params.projection_1, scale(upstream, alpha),
                                       g.stream_1);
  g.projection_2 = projection_backward(stream_2, params.projection_2,
                                       scale(upstream, 1.0 - alpha), g.stream_2);
  return g;
}

ProjectionParams random_projection(std::size_t d_in, std::size_t d_out, std::uint64_t seed) {
  if (d_in == 0 || d_out == 0) throw ConfigError("projection dimensions must be positive");
  Rng rng(derive_seed(seed, "projection"));
  ProjectionParams p;
  p.weight = gaussian_matrix(rng, d_in, d_out, 1.0 / std::sqrt(static_cast<double>(d_in)));
  p.bias.assign(d_out, 0.0);
  return p;
}

}  // namespace mmfuse
