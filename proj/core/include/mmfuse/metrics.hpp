// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mmfuse {

using TokenList = std::vector<std::string>;

/// CJK ideographs become single-character tokens; runs of letters and digits
/// become lowercased word tokens; whitespace and punctuation separate tokens
/// and are dropped. Fullwidth ASCII letters and digits are folded to ASCII.
TokenList tokenize(std::string_view text);

/// 1 iff the token sequences are identical (two empty sequences match).
int exact_match(const TokenList& candidate, const TokenList& reference);

struct PrfScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Multiset token overlap. An empty side contributes a zero ratio, except
/// that two empty sequences score (1, 1, 1).
PrfScore prf(const TokenList& candidate, const TokenList& reference);

struct BleuWeights {
  std::array<double, 4> w{0.25, 0.25, 0.25, 0.25};

  static BleuWeights uniform() { return {{0.25, 0.25, 0.25, 0.25}}; }
  static BleuWeights bleu1() { return {{1.0, 0.0, 0.0, 0.0}}; }
  static BleuWeights bleu2() { return {{0.5, 0.5, 0.0, 0.0}}; }
  static BleuWeights bleu3() { return {{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0}}; }

  /// Nonnegative and summing to 1 within 1e-9; throws ConfigError.
  void validate() const;
};

inline constexpr double kBleuSmoothingEpsilon = 1e-9;

/// Sentence BLEU against one reference, with clipped n-gram precisions and
/// the brevity penalty. Orders for which the candidate has no n-grams are
/// left out and the remaining weights renormalized. Without smoothing a zero
/// precision on a weighted order gives 0; with smoothing a zero precision is
/// replaced by kBleuSmoothingEpsilon.
double bleu(const TokenList& candidate, const TokenList& reference, const BleuWeights& weights,
            bool smoothing = false);

/// Fraction of label pairs equal after tokenization. Throws ShapeError on a
/// length mismatch and DomainError on empty input.
double closed_accuracy(std::span<const std::string> predictions, std::span<const std::string> golds);

struct MetricRow {
  double em = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double bleu_uniform = 0.0;
  double bleu_1 = 0.0;
  double bleu_2 = 0.0;
  double bleu_3 = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  MetricRow corpus;  // arithmetic means over rows
  std::optional<double> closed_accuracy;
  std::size_t closed_count = 0;
};

struct EvalPair {
  std::string candidate;
  std::string reference;
  bool closed = false;
};

MetricRow score_pair(std::string_view candidate, std::string_view reference, bool smoothing = false);

/// Scores every pair in order; closed accuracy covers rows flagged closed.
MetricReport evaluate_corpus(std::span<const EvalPair> pairs, bool smoothing = false);

std::string report_to_json(const MetricReport& report);

/// {"candidate": str, "reference": str, "closed": bool?} per line.
std::vector<EvalPair> read_eval_pairs_jsonl(const std::filesystem::path& path);

/// Joins a predictions file ({"candidate": str}) with a references file
/// ({"reference": str, "closed": bool?}) row by row. Throws IoError naming
/// both counts when they differ.
std::vector<EvalPair> read_aligned_eval_files(const std::filesystem::path& predictions,
                                              const std::filesystem::path& references);

}  // namespace mmfuse
