#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include <json.hpp>

#include <mmfuse/error.hpp>
#include <mmfuse/jsonl.hpp>
#include <mmfuse/metrics.hpp>
#include <mmfuse/random.hpp>

#include "metrics_fixture.hpp"

using namespace mmfuse;

TEST(Tokenize, SpecExamples) {
  EXPECT_EQ(tokenize("左肾结石"), (TokenList{"左", "肾", "结", "石"}));
  EXPECT_EQ(tokenize("CT scan, 3mm"), (TokenList{"ct", "scan", "3mm"}));
  EXPECT_TRUE(tokenize("").empty());
}

TEST(Tokenize, MixedScriptsAndPunctuation) {
  EXPECT_EQ(tokenize("甲状腺nodule，大小3mm。"), (TokenList{"甲", "状", "腺", "nodule", "大", "小", "3mm"}));
  EXPECT_EQ(tokenize("  --  !!  "), TokenList{});
  EXPECT_EQ(tokenize("ＡＢ１２ x"), (TokenList{"ab12", "x"}));
}

TEST(Tokenize, IdempotentOnJoinedTokens) {
  for (const char* text : {"The Left KIDNEY, 12mm stone.", "no-acute findings; follow up 6 months"}) {
    const TokenList t = tokenize(text);
    std::string joined;
    for (const auto& tok : t) joined += (joined.empty() ? "" : " ") + tok;
    EXPECT_EQ(tokenize(joined), t);
  }
  const TokenList cjk = tokenize("右侧乳腺结节");
  std::string joined;
  for (const auto& tok : cjk) joined += tok;
  EXPECT_EQ(tokenize(joined), cjk);
}

TEST(ExactMatch, SpecExamples) {
  EXPECT_EQ(exact_match({"a", "b"}, {"a", "b"}), 1);
  EXPECT_EQ(exact_match({"a", "b"}, {"b", "a"}), 0);
  EXPECT_EQ(exact_match({}, {}), 1);
}

TEST(Prf, SpecExamples) {
  const PrfScore s = prf({"a", "b"}, {"b", "c"});
  EXPECT_DOUBLE_EQ(s.precision, 0.5);
  EXPECT_DOUBLE_EQ(s.recall, 0.5);
  EXPECT_DOUBLE_EQ(s.f1, 0.5);
  const PrfScore same = prf({"x", "y", "x"}, {"x", "y", "x"});
  EXPECT_EQ(same.f1, 1.0);
  const PrfScore empty = prf({}, {"a"});
  EXPECT_EQ(empty.precision, 0.0);
  EXPECT_EQ(empty.recall, 0.0);
  EXPECT_EQ(empty.f1, 0.0);
  const PrfScore disjoint = prf({"a"}, {"b"});
  EXPECT_EQ(disjoint.f1, 0.0);
}

TEST(Prf, PrecisionRecallSymmetry) {
  Rng rng(3);
  std::uniform_int_distribution<int> len(0, 6), sym(0, 4);
  for (int trial = 0; trial < 500; ++trial) {
    TokenList c, r;
    for (int i = len(rng); i > 0; --i) c.push_back(std::string(1, static_cast<char>('a' + sym(rng))));
    for (int i = len(rng); i > 0; --i) r.push_back(std::string(1, static_cast<char>('a' + sym(rng))));
    EXPECT_EQ(prf(c, r).precision, prf(r, c).recall);
  }
}

TEST(Bleu, SpecExamples) {
  const TokenList c{"a", "b", "c"}, r{"a", "b", "d"};
  EXPECT_NEAR(bleu(c, r, BleuWeights::bleu1()), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(bleu(c, r, BleuWeights::bleu2()), std::sqrt(1.0 / 3.0), 1e-12);
  for (const auto& w : {BleuWeights::uniform(), BleuWeights::bleu1(), BleuWeights::bleu2(), BleuWeights::bleu3()}) {
    EXPECT_EQ(bleu({"x", "y", "z", "w", "v"}, {"x", "y", "z", "w", "v"}, w), 1.0);
  }
}

TEST(Bleu, RejectsBadWeights) {
  EXPECT_THROW(bleu({"a"}, {"a"}, BleuWeights{{0.5, 0.6, 0.0, 0.0}}), ConfigError);
  EXPECT_THROW(bleu({"a"}, {"a"}, BleuWeights{{1.5, -0.5, 0.0, 0.0}}), ConfigError);
}

TEST(Bleu, SmoothingReplacesZeroPrecision) {
  const TokenList c{"a", "b", "c"}, r{"a", "b", "d"};
  EXPECT_EQ(bleu(c, r, BleuWeights::bleu3()), 0.0);
  const double smoothed = bleu(c, r, BleuWeights::bleu3(), true);
  EXPECT_NEAR(smoothed, std::cbrt(2.0 / 3.0 * 0.5 * kBleuSmoothingEpsilon), 1e-15);
}

TEST(ClosedAccuracy, SpecExamples) {
  const std::vector<std::string> gold{"yes", "no", "Left", "B"};
  EXPECT_EQ(closed_accuracy(gold, gold), 1.0);
  const std::vector<std::string> half{"yes", "yes", "left!", "A"};
  EXPECT_EQ(closed_accuracy(half, gold), 0.5);
  EXPECT_THROW(closed_accuracy(std::vector<std::string>{}, std::vector<std::string>{}), DomainError);
  EXPECT_THROW(closed_accuracy(std::vector<std::string>{"a"}, gold), ShapeError);
}

TEST(Fixture, EveryRowMatchesHandValues) {
  for (const auto& c : mmfuse::testing::metric_fixture()) {
    const MetricRow row = score_pair(c.candidate, c.reference);
    const std::string at = c.candidate + " | " + c.reference;
    EXPECT_NEAR(row.em, c.em, 1e-9) << at;
    EXPECT_NEAR(row.precision, c.precision, 1e-9) << at;
    EXPECT_NEAR(row.recall, c.recall, 1e-9) << at;
    EXPECT_NEAR(row.f1, c.f1, 1e-9) << at;
    EXPECT_NEAR(row.bleu_uniform, c.bleu_uniform, 1e-9) << at;
    EXPECT_NEAR(row.bleu_1, c.bleu_1, 1e-9) << at;
    EXPECT_NEAR(row.bleu_2, c.bleu_2, 1e-9) << at;
    EXPECT_NEAR(row.bleu_3, c.bleu_3, 1e-9) << at;
  }
}

TEST(Fixture, CorpusMeansAndClosedAccuracy) {
  const auto fixture = mmfuse::testing::metric_fixture();
  std::vector<EvalPair> pairs;
  for (const auto& c : fixture) pairs.push_back({c.candidate, c.reference, c.closed});
  const MetricReport report = evaluate_corpus(pairs);
  ASSERT_EQ(report.rows.size(), fixture.size());
  double em = 0.0, f1 = 0.0, b3 = 0.0;
  for (const auto& c : fixture) {
    em += c.em;
    f1 += c.f1;
    b3 += c.bleu_3;
  }
  const double n = static_cast<double>(fixture.size());
  EXPECT_NEAR(report.corpus.em, em / n, 1e-12);
  EXPECT_NEAR(report.corpus.f1, f1 / n, 1e-12);
  EXPECT_NEAR(report.corpus.bleu_3, b3 / n, 1e-12);
  ASSERT_TRUE(report.closed_accuracy.has_value());
  EXPECT_NEAR(*report.closed_accuracy, mmfuse::testing::kFixtureClosedAccuracy, 1e-12);
  EXPECT_EQ(report.closed_count, 4u);
}

TEST(EvaluateCorpus, IdenticalPairIsPerfectAndDuplicationKeepsMeans) {
  const MetricReport one = evaluate_corpus(std::vector<EvalPair>{{"肝囊肿 3mm", "肝囊肿 3mm", false}});
  for (double v : {one.corpus.em, one.corpus.precision, one.corpus.recall, one.corpus.f1, one.corpus.bleu_uniform,
                   one.corpus.bleu_1, one.corpus.bleu_2, one.corpus.bleu_3}) {
    EXPECT_EQ(v, 1.0);
  }
  EXPECT_FALSE(one.closed_accuracy.has_value());

  std::vector<EvalPair> pairs;
  for (const auto& c : mmfuse::testing::metric_fixture()) pairs.push_back({c.candidate, c.reference, c.closed});
  std::vector<EvalPair> doubled = pairs;
  doubled.insert(doubled.end(), pairs.begin(), pairs.end());
  const MetricReport a = evaluate_corpus(pairs), b = evaluate_corpus(doubled);
  EXPECT_NEAR(a.corpus.f1, b.corpus.f1, 1e-12);
  EXPECT_NEAR(a.corpus.bleu_uniform, b.corpus.bleu_uniform, 1e-12);
  EXPECT_NEAR(*a.closed_accuracy, *b.closed_accuracy, 1e-12);
  EXPECT_THROW(evaluate_corpus(std::vector<EvalPair>{}), DomainError);
}

TEST(EvaluateCorpus, InvariantsOnRandomPairs) {
  Rng rng(8);
  std::uniform_int_distribution<int> len(0, 7), sym(0, 5);
  const char* words[] = {"cyst", "肾", "nodule", "3mm", "liver", "石"};
  for (int trial = 0; trial < 300; ++trial) {
    std::string c, r;
    for (int i = len(rng); i > 0; --i) c += std::string(words[sym(rng)]) + " ";
    for (int i = len(rng); i > 0; --i) r += std::string(words[sym(rng)]) + " ";
    const MetricRow row = score_pair(c, r);
    for (double v : {row.em, row.precision, row.recall, row.f1, row.bleu_uniform, row.bleu_1, row.bleu_2, row.bleu_3}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    if (row.em == 1.0) {
      EXPECT_EQ(row.f1, 1.0);
      EXPECT_EQ(row.bleu_uniform, 1.0);
    }
  }
}

TEST(ReportJson, KeysAndRowCount) {
  const MetricReport r = evaluate_corpus(std::vector<EvalPair>{{"a", "a", true}, {"a b", "b", false}});
  const auto doc = nlohmann::json::parse(report_to_json(r));
  ASSERT_EQ(doc.at("rows").size(), 2u);
  for (const char* key : {"em", "precision", "recall", "f1", "bleu_uniform", "bleu_1", "bleu_2", "bleu_3"}) {
    EXPECT_TRUE(doc["rows"][0].contains(key)) << key;
    EXPECT_TRUE(doc["corpus"].contains(key)) << key;
  }
  EXPECT_EQ(doc["corpus"]["closed_accuracy"].get<double>(), 1.0);
  EXPECT_EQ(doc["corpus"]["count"].get<int>(), 2);
}

TEST(EvalFiles, AlignedFilesAndCountMismatch) {
  const auto dir = std::filesystem::temp_directory_path();
  write_text_file_atomic(dir / "mmfuse_pred.jsonl", "{\"candidate\": \"a\"}\n{\"candidate\": \"b c\"}\n");
  write_text_file_atomic(dir / "mmfuse_ref.jsonl", "{\"reference\": \"a\", \"closed\": true}\n{\"reference\": \"b\"}\n");
  write_text_file_atomic(dir / "mmfuse_ref3.jsonl", "{\"reference\": \"a\"}\n{\"reference\": \"b\"}\n{\"reference\": \"c\"}\n");
  const auto pairs = read_aligned_eval_files(dir / "mmfuse_pred.jsonl", dir / "mmfuse_ref.jsonl");
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[1].candidate, "b c");
  EXPECT_TRUE(pairs[0].closed);
  try {
    read_aligned_eval_files(dir / "mmfuse_pred.jsonl", dir / "mmfuse_ref3.jsonl");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('2'), std::string::npos) << msg;
    EXPECT_NE(msg.find('3'), std::string::npos) << msg;
  }
  for (const char* f : {"mmfuse_pred.jsonl", "mmfuse_ref.jsonl", "mmfuse_ref3.jsonl"}) std::filesystem::remove(dir / f);
}
