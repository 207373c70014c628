// SPDX-License-Identifier: Apache-2.0
#include "mmfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "json_io.hpp"
#include "mmfuse/error.hpp"

namespace mmfuse {

namespace {

// Decodes one UTF-8 code point starting at text[i]; advances i. Invalid
// sequences yield U+FFFD and consume one byte.
char32_t next_code_point(std::string_view text, std::size_t& i) {
  const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
  const unsigned char b0 = byte(i);
  std::size_t len = 0;
  char32_t cp = 0;
  if (b0 < 0x80) {
    ++i;
    return b0;
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  if (i + len > text.size()) {
    ++i;
    return 0xFFFD;
  }
  for (std::size_t k = 1; k < len; ++k) {
    if ((byte(i + k) & 0xC0) != 0x80) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | (byte(i + k) & 0x3F);
  }
  i += len;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

bool is_cjk_ideograph(char32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
         (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x20000 && cp <= 0x2FA1F) ||
         cp == 0x3007;
}

bool is_separator(char32_t cp) {
  if (cp < 0x80) return !((cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z'));
  return (cp >= 0x80 && cp <= 0xBF) || cp == 0xD7 || cp == 0xF7 ||  // Latin-1 controls, punctuation, symbols
         (cp >= 0x2000 && cp <= 0x206F) ||                          // general punctuation, spaces
         (cp >= 0x2E00 && cp <= 0x2E7F) ||                          // supplemental punctuation
         (cp >= 0x3000 && cp <= 0x303F && cp != 0x3007) ||          // CJK symbols and punctuation
         (cp >= 0xFE30 && cp <= 0xFE4F) ||                          // CJK compatibility forms
         (cp >= 0xFF00 && cp <= 0xFF0F) || (cp >= 0xFF1A && cp <= 0xFF20) ||
         (cp >= 0xFF3B && cp <= 0xFF40) || (cp >= 0xFF5B && cp <= 0xFF65) ||
         cp == 0xFEFF || cp == 0xFFFD;
}

char32_t fold(char32_t cp) {
  if (cp >= 0xFF10 && cp <= 0xFF19) cp = cp - 0xFF10 + '0';
  if (cp >= 0xFF21 && cp <= 0xFF3A) cp = cp - 0xFF21 + 'A';
  if (cp >= 0xFF41 && cp <= 0xFF5A) cp = cp - 0xFF41 + 'a';
  if (cp >= 'A' && cp <= 'Z') return cp + ('a' - 'A');
  if ((cp >= 0xC0 && cp <= 0xDE) && cp != 0xD7) return cp + 0x20;
  return cp;
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(const TokenList& tokens, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

TokenList tokenize(std::string_view text) {
  TokenList tokens;
  std::string word;
  const auto flush = [&] {
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = next_code_point(text, i);
    if (is_cjk_ideograph(cp)) {
      flush();
      std::string ch;
      append_utf8(ch, cp);
      tokens.push_back(std::move(ch));
    } else if (is_separator(cp)) {
      flush();
    } else {
      append_utf8(word, fold(cp));
    }
  }
  flush();
  return tokens;
}

int exact_match(const TokenList& candidate, const TokenList& reference) {
  return candidate == reference ? 1 : 0;
}

PrfScore prf(const TokenList& candidate, const TokenList& reference) {
  if (candidate.empty() && reference.empty()) return {1.0, 1.0, 1.0};
  std::map<std::string, std::size_t> ref_counts;
  for (const auto& t : reference) ++ref_counts[t];
  std::size_t overlap = 0;
  for (const auto& t : candidate) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  PrfScore s;
  s.precision = candidate.empty() ? 0.0 : static_cast<double>(overlap) / static_cast<double>(candidate.size());
  s.recall = reference.empty() ? 0.0 : static_cast<double>(overlap) / static_cast<double>(reference.size());
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

void BleuWeights::validate() const {
  double total = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("BLEU weights must be nonnegative and finite");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("BLEU weights must sum to 1");
}

double bleu(const TokenList& candidate, const TokenList& reference, const BleuWeights& weights,
            bool smoothing) {
  weights.validate();
  if (candidate.empty()) return reference.empty() ? 1.0 : 0.0;
  double log_sum = 0.0;
  double weight_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const double wn = weights.w[n - 1];
    if (wn <= 0.0 || candidate.size() < n) continue;
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    std::size_t clipped = 0;
    for (const auto& [gram, count] : cand) {
      auto it = ref.find(gram);
      if (it != ref.end()) clipped += std::min(count, it->second);
    }
    const double total = static_cast<double>(candidate.size() - n + 1);
    double pn = static_cast<double>(clipped) / total;
    if (pn == 0.0) {
      if (!smoothing) return 0.0;
      pn = kBleuSmoothingEpsilon;
    }
    log_sum += wn * std::log(pn);
    weight_sum += wn;
  }
  const double precision = weight_sum > 0.0 ? std::exp(log_sum / weight_sum) : 0.0;
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * precision;
}

double closed_accuracy(std::span<const std::string> predictions, std::span<const std::string> golds) {
  if (predictions.size() != golds.size()) {
    throw ShapeError("closed_accuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(golds.size()) + " labels");
  }
  if (predictions.empty()) throw DomainError("closed_accuracy: no labels");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (tokenize(predictions[i]) == tokenize(golds[i])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

MetricRow score_pair(std::string_view candidate, std::string_view reference, bool smoothing) {
  const auto c = tokenize(candidate);
  const auto r = tokenize(reference);
  MetricRow row;
  row.em = exact_match(c, r);
  const auto s = prf(c, r);
  row.precision = s.precision;
  row.recall = s.recall;
  row.f1 = s.f1;
  row.bleu_uniform = bleu(c, r, BleuWeights::uniform(), smoothing);
  row.bleu_1 = bleu(c, r, BleuWeights::bleu1(), smoothing);
  row.bleu_2 = bleu(c, r, BleuWeights::bleu2(), smoothing);
  row.bleu_3 = bleu(c, r, BleuWeights::bleu3(), smoothing);
  return row;
}

MetricReport evaluate_corpus(std::span<const EvalPair> pairs, bool smoothing) {
  if (pairs.empty()) throw DomainError("evaluate_corpus: empty corpus");
  MetricReport report;
  std::vector<std::string> closed_pred;
  std::vector<std::string> closed_gold;
  for (const auto& p : pairs) {
    report.rows.push_back(score_pair(p.candidate, p.reference, smoothing));
    if (p.closed) {
      closed_pred.push_back(p.candidate);
      closed_gold.push_back(p.reference);
    }
  }
  MetricRow& m = report.corpus;
  for (const auto& r : report.rows) {
    m.em += r.em;
    m.precision += r.precision;
    m.recall += r.recall;
    m.f1 += r.f1;
    m.bleu_uniform += r.bleu_uniform;
    m.bleu_1 += r.bleu_1;
    m.bleu_2 += r.bleu_2;
    m.bleu_3 += r.bleu_3;
  }
  const double n = static_cast<double>(report.rows.size());
  for (double* v : {&m.em, &m.precision, &m.recall, &m.f1, &m.bleu_uniform, &m.bleu_1, &m.bleu_2, &m.bleu_3}) *v /= n;
  report.closed_count = closed_pred.size();
  if (!closed_pred.empty()) report.closed_accuracy = closed_accuracy(closed_pred, closed_gold);
  return report;
}

namespace {

detail::json row_to_json(const MetricRow& r) {
  return {{"em", r.em},           {"precision", r.precision}, {"recall", r.recall},
          {"f1", r.f1},           {"bleu_uniform", r.bleu_uniform}, {"bleu_1", r.bleu_1},
          {"bleu_2", r.bleu_2},   {"bleu_3", r.bleu_3}};
}

}  // namespace

std::string report_to_json(const MetricReport& report) {
  using detail::json;
  json rows = json::array();
  for (const auto& r : report.rows) rows.push_back(row_to_json(r));
  json corpus = row_to_json(report.corpus);
  corpus["closed_accuracy"] = report.closed_accuracy ? json(*report.closed_accuracy) : json(nullptr);
  corpus["closed_count"] = report.closed_count;
  corpus["count"] = report.rows.size();
  json doc = {{"rows", std::move(rows)}, {"corpus", std::move(corpus)}};
  return doc.dump(2) + "\n";
}

std::vector<EvalPair> read_eval_pairs_jsonl(const std::filesystem::path& path) {
  std::vector<EvalPair> out;
  detail::for_each_jsonl(path, [&](const detail::json& j, std::size_t line) {
    detail::check_keys(j, {"candidate", "reference", "closed"}, {"candidate", "reference"}, "evaluation pair", line);
    EvalPair p;
    p.candidate = j.at("candidate").get<std::string>();
    p.reference = j.at("reference").get<std::string>();
    p.closed = j.value("closed", false);
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<EvalPair> read_aligned_eval_files(const std::filesystem::path& predictions,
                                              const std::filesystem::path& references) {
  std::vector<std::string> cands;
  detail::for_each_jsonl(predictions, [&](const detail::json& j, std::size_t line) {
    detail::check_keys(j, {"candidate", "id"}, {"candidate"}, "prediction", line);
    cands.push_back(j.at("candidate").get<std::string>());
  });
  std::vector<EvalPair> out;
  detail::for_each_jsonl(references, [&](const detail::json& j, std::size_t line) {
    detail::check_keys(j, {"reference", "closed", "id"}, {"reference"}, "reference", line);
    EvalPair p;
    p.reference = j.at("reference").get<std::string>();
    p.closed = j.value("closed", false);
    out.push_back(std::move(p));
  });
  if (cands.size() != out.size()) {
    throw IoError("row count mismatch: " + std::to_string(cands.size()) + " predictions in '" +
                  predictions.string() + "' vs " + std::to_string(out.size()) + " references in '" +
                  references.string() + "'");
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].candidate = std::move(cands[i]);
  return out;
}

}  // namespace mmfuse
