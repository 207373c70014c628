// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mmfuse/matrix.hpp"

namespace mmfuse {

/// Token features of one image or text: m tokens x d channels.
using FeatureMatrix = Matrix;

/// Affine map from encoder channels into the shared feature space.
struct ProjectionParams {
  Matrix weight;             // d_in x d_out
  std::vector<double> bias;  // d_out

  std::size_t input_dim() const noexcept { return weight.rows(); }
  std::size_t output_dim() const noexcept { return weight.cols(); }
  /// Throws ShapeError when weight and bias disagree.
  void validate() const;
};

/// Learnable blend of two projected streams. The gate is alpha = sigmoid(alpha_logit),
/// which keeps the result a convex combination for every logit.
struct FusionParams {
  double alpha_logit = 0.0;
  ProjectionParams projection_1;
  ProjectionParams projection_2;

  double alpha() const;
  void validate() const;
};

/// Stand-in for a pretrained image encoder. The synthetic kind draws
/// Gaussian features keyed by (seed, image_id); the file-backed kind serves
/// features read from JSON Lines.
class EncoderStub {
 public:
  enum class Kind { synthetic_gaussian, file_backed };

  static EncoderStub synthetic(std::size_t token_count, std::size_t channels, std::uint64_t seed);
  /// Loads {"image_id": str, "features": [[...], ...]} records.
  static EncoderStub from_jsonl(const std::filesystem::path& path);
  static EncoderStub from_records(std::map<std::string, FeatureMatrix> records);

  Kind kind() const noexcept { return kind_; }
  std::size_t token_count() const noexcept { return token_count_; }
  std::size_t channels() const noexcept { return channels_; }

  /// Deterministic in (stub, image_id). Throws LookupError for a file-backed
  /// stub without a record for image_id.
  FeatureMatrix encode(const std::string& image_id) const;

 private:
  Kind kind_ = Kind::synthetic_gaussian;
  std::size_t token_count_ = 0;
  std::size_t channels_ = 0;
  std::uint64_t seed_ = 0;
  std::map<std::string, FeatureMatrix> records_;
};

/// features * weight, with bias added to every row.
FeatureMatrix project(const FeatureMatrix& features, const ProjectionParams& params);

/// alpha * h1 + (1 - alpha) * h2 elementwise.
FeatureMatrix fuse(const FeatureMatrix& h1, const FeatureMatrix& h2, const FusionParams& params);

/// Projects each raw stream and fuses the results.
FeatureMatrix fuse_streams(const FeatureMatrix& stream_1, const FeatureMatrix& stream_2,
                           const FusionParams& params);

struct ProjectionGrads {
  Matrix weight;
  std::vector<double> bias;
};

struct FusionGrads {
  double alpha_logit = 0.0;
  ProjectionGrads projection_1;
  ProjectionGrads projection_2;
  Matrix stream_1;  // gradient with respect to the raw encoder features
  Matrix stream_2;
};

/// Backpropagates `upstream` (dL/dH_v, same shape as the fused output)
/// through fuse_streams.
FusionGrads fusion_backward(const FeatureMatrix& stream_1, const FeatureMatrix& stream_2,
                            const FusionParams& params, const FeatureMatrix& upstream);

/// Random projection params with N(0, 1/d_in) weights and zero bias.
ProjectionParams random_projection(std::size_t d_in, std::size_t d_out, std::uint64_t seed);

}  // namespace mmfuse
