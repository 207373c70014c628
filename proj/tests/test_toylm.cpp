#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include <mmfuse/error.hpp>
#include <mmfuse/gradcheck.hpp>
#include <mmfuse/jsonl.hpp>
#include <mmfuse/numcore.hpp>
#include <mmfuse/random.hpp>
#include <mmfuse/toylm.hpp>

using namespace mmfuse;
namespace names = toylm_names;

namespace {

ToyLMConfig small_config(std::size_t vocab) {
  ToyLMConfig c;
  c.vocab_size = vocab;
  c.embed_dim = 6;
  c.key_dim = 3;
  c.visual_dim = 4;
  c.adapter_rank = 1;
  return c;
}

// Every output weight zero (the adapter's B starts at zero) -> constant logits.
ToyLMParams uniform_model(std::size_t vocab) {
  ToyLMParams p = ToyLMParams::init(small_config(vocab), 1);
  p.parameter(names::kOutputWeight) = Matrix(p.embed_dim, vocab);
  return p;
}

std::size_t rank_by_row_reduction(Matrix m, double tol = 1e-9) {
  std::size_t rank = 0;
  for (std::size_t col = 0; col < m.cols() && rank < m.rows(); ++col) {
    std::size_t pivot = rank;
    for (std::size_t r = rank; r < m.rows(); ++r)
      if (std::abs(m(r, col)) > std::abs(m(pivot, col))) pivot = r;
    if (std::abs(m(pivot, col)) < tol) continue;
    for (std::size_t c = 0; c < m.cols(); ++c) std::swap(m(rank, c), m(pivot, c));
    for (std::size_t r = 0; r < m.rows(); ++r) {
      if (r == rank) continue;
      const double f = m(r, col) / m(rank, col);
      for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) -= f * m(rank, c);
    }
    ++rank;
  }
  return rank;
}

std::vector<TokenSequence> all_sequences(std::size_t vocab, std::size_t len) {
  std::vector<TokenSequence> out{{}};
  for (std::size_t l = 0; l < len; ++l) {
    std::vector<TokenSequence> next;
    for (const auto& s : out) {
      for (std::size_t v = 0; v < vocab; ++v) {
        next.push_back(s);
        next.back().push_back(v);
      }
    }
    out = std::move(next);
  }
  return out;
}

}  // namespace

TEST(ToyLM, ZeroOutputWeightIsUniform) {
  Rng rng(1);
  const ToyLMParams p = uniform_model(7);
  const auto dist = next_token_dist(p, gaussian_matrix(rng, 3, 4, 1.0), {1, 2}, {3});
  for (double q : dist) EXPECT_NEAR(q, 1.0 / 7.0, 1e-15);
}

TEST(ToyLM, DistributionSumsToOne) {
  Rng rng(2);
  const ToyLMParams p = ToyLMParams::init(small_config(11), 3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto dist = next_token_dist(p, gaussian_matrix(rng, 2, 4, 3.0), {1, 5, 7}, {static_cast<std::size_t>(trial % 11)});
    double sum = 0.0;
    for (double q : dist) sum += q;
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(ToyLM, OutOfRangeTokenIsDomainError) {
  Rng rng(3);
  const ToyLMParams p = ToyLMParams::init(small_config(5), 1);
  const Matrix v = gaussian_matrix(rng, 2, 4, 1.0);
  EXPECT_THROW(next_token_dist(p, v, {1, 5}, {}), DomainError);
  EXPECT_THROW(sequence_log_prob(p, v, {1}, {9}), DomainError);
  EXPECT_THROW(next_token_dist(p, Matrix(2, 3), {1}, {}), ShapeError);
}

TEST(SequenceLogProb, UniformFactorization) {
  Rng rng(4);
  const ToyLMParams p = uniform_model(2);
  EXPECT_NEAR(sequence_log_prob(p, gaussian_matrix(rng, 2, 4, 1.0), {0, 1}, {1, 0, 1}), 3.0 * std::log(0.5), 1e-12);
}

TEST(SequenceLogProb, PointMassGivesZero) {
  ToyLMParams p = ToyLMParams::init(small_config(4), 5);
  // Every row of the attention input equals e, so the hidden state is 2e.
  const std::vector<double> e{1, 0, 0, 0, 0, 0};
  Matrix emb(4, 6);
  for (std::size_t v = 0; v < 4; ++v) emb(v, 0) = 1.0;
  p.parameter(names::kTokenEmbedding) = emb;
  p.parameter(names::kContextWeight) = Matrix(4, 6);
  p.parameter(names::kContextBias) = Matrix::row_vector(e);
  Matrix out(6, 4);
  out(0, 2) = 400.0;
  p.parameter(names::kOutputWeight) = out;
  Rng rng(5);
  EXPECT_NEAR(sequence_log_prob(p, gaussian_matrix(rng, 2, 4, 1.0), {0, 1}, {2}), 0.0, 1e-12);
}

TEST(SequenceLogProb, RejectsEmptyAnswer) {
  const ToyLMParams p = uniform_model(3);
  EXPECT_THROW(sequence_log_prob(p, Matrix(1, 4), {0}, {}), DomainError);
}

TEST(SequenceLogProb, ExhaustiveEnumerationSumsToOne) {
  Rng rng(6);
  for (std::size_t vocab = 2; vocab <= 5; ++vocab) {
    ToyLMParams p = ToyLMParams::init(small_config(vocab), vocab);
    for (auto& [base, a] : p.adapters) a.b = gaussian_matrix(rng, a.b.rows(), a.b.cols(), 1.0);
    const Matrix visual = gaussian_matrix(rng, 3, 4, 1.0);
    for (std::size_t len = 1; len <= 3; ++len) {
      double total = 0.0;
      for (const auto& seq : all_sequences(vocab, len)) {
        const double lp = sequence_log_prob(p, visual, {0, vocab - 1}, seq);
        EXPECT_LE(lp, 0.0);
        total += std::exp(lp);
      }
      EXPECT_NEAR(total, 1.0, 1e-6) << "vocab " << vocab << " L " << len;
    }
  }
}

TEST(TeacherForcedLoss, UniformModelIsLogVocab) {
  Rng rng(7);
  const ToyLMParams p = uniform_model(4);
  std::vector<LMExample> batch{{gaussian_matrix(rng, 2, 4, 1.0), {0, 1}, {2, 3, 1}},
                               {gaussian_matrix(rng, 5, 4, 1.0), {3}, {0}}};
  EXPECT_NEAR(teacher_forced_loss(p, batch), std::log(4.0), 1e-9);
}

TEST(TeacherForcedLoss, MeanOverBatch) {
  Rng rng(8);
  const ToyLMParams p = ToyLMParams::init(small_config(6), 2);
  const LMExample ex{gaussian_matrix(rng, 2, 4, 1.0), {0, 1}, {2, 3}};
  const std::vector<LMExample> once{ex}, twice{ex, ex};
  EXPECT_NEAR(teacher_forced_loss(p, once), teacher_forced_loss(p, twice), 1e-15);
  EXPECT_NEAR(teacher_forced_loss(p, once), -sequence_log_prob(p, ex.visual, ex.instruction, ex.answer) / 2.0, 1e-12);
  EXPECT_THROW(teacher_forced_loss(p, std::vector<LMExample>{}), DomainError);
}

TEST(TeacherForcedLoss, GradientsMatchCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    ToyLMConfig config = small_config(7);
    config.adapter_rank = 2;
    config.adapter_targets = {names::kOutputWeight, names::kAttnQuery};
    ToyLMParams p = ToyLMParams::init(config, seed);
    for (auto& [base, a] : p.adapters) a.b = gaussian_matrix(rng, a.b.rows(), a.b.cols(), 0.5);
    p.parameter(names::kContextBias) = gaussian_matrix(rng, 1, config.embed_dim, 0.5);
    std::vector<LMExample> batch{{gaussian_matrix(rng, 3, 4, 1.0), {0, 3, 6}, {1, 2, 5}},
                                 {gaussian_matrix(rng, 2, 4, 1.0), {4}, {6, 0}}};
    NamedGrads grads;
    teacher_forced_loss_and_grad(p, batch, grads);
    for (const auto& name : p.parameter_names()) {
      const auto f = [&](std::span<const double> x) {
        ToyLMParams q = p;
        std::copy(x.begin(), x.end(), q.parameter(name).data().begin());
        return teacher_forced_loss(q, batch);
      };
      const auto numeric = finite_diff_grad(f, p.parameter(name).data(), 1e-5);
      const GradReport r = check_gradients(grads.at(name).data(), numeric, 1e-4, name);
      EXPECT_TRUE(r.pass) << name << " seed " << seed << " err " << r.max_relative_error;
    }
  }
}

TEST(LowRankAdapter, SpecExamples) {
  Rng rng(9);
  const Matrix w = gaussian_matrix(rng, 3, 4, 1.0);
  EXPECT_EQ(apply_low_rank_adapter(w, {Matrix(3, 2), gaussian_matrix(rng, 2, 4, 1.0), 1.0}), w);
  EXPECT_EQ(apply_low_rank_adapter(Matrix(2, 2), {Matrix{{1}, {0}}, Matrix{{2, 0}}, 1.0}), (Matrix{{2, 0}, {0, 0}}));
  EXPECT_THROW(apply_low_rank_adapter(w, {Matrix(3, 2), Matrix(2, 5), 1.0}), ShapeError);
}

TEST(LowRankAdapter, DeltaRankBounded) {
  Rng rng(10);
  for (std::size_t r = 1; r <= 3; ++r) {
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix w = gaussian_matrix(rng, 7, 5, 1.0);
      const LowRankAdapter a{gaussian_matrix(rng, 7, r, 1.0), gaussian_matrix(rng, r, 5, 1.0), 0.7};
      const Matrix out = apply_low_rank_adapter(w, a);
      EXPECT_EQ(rank_by_row_reduction(subtract(out, w)), r);
      EXPECT_EQ(rank_by_row_reduction(w), 5u);
    }
  }
}

TEST(LowRankAdapter, RankMustBeBelowBothDimensions) {
  EXPECT_THROW((LowRankAdapter{Matrix(3, 3), Matrix(3, 4), 1.0}.validate(3, 4)), ConfigError);
  EXPECT_NO_THROW((LowRankAdapter{Matrix(3, 2), Matrix(2, 4), 1.0}.validate(3, 4)));
}

TEST(TrainableParameters, FreezeSets) {
  ToyLMParams p = ToyLMParams::init(small_config(8), 1);
  EXPECT_EQ(trainable_parameters(p), (std::vector<std::string>{names::kContextBias, names::kContextWeight,
                                                                "output_weight.lora_a", "output_weight.lora_b"}));
  p.freeze_spec.clear();
  EXPECT_EQ(trainable_parameters(p), p.parameter_names());
  EXPECT_EQ(p.parameter_names().size(), 8u);
  const auto all = p.parameter_names();
  p.freeze_spec = {all.begin(), all.end()};
  EXPECT_TRUE(trainable_parameters(p).empty());
  p.freeze_spec.insert("no_such_weight");
  EXPECT_THROW(trainable_parameters(p), ConfigError);
}

TEST(TrainTwoStage, FrozenParametersAreBitIdentical) {
  Rng rng(11);
  const ToyLMParams p = ToyLMParams::init(small_config(6), 4);
  std::vector<LMExample> data{{gaussian_matrix(rng, 2, 4, 1.0), {0, 1}, {2, 3}},
                              {gaussian_matrix(rng, 2, 4, 1.0), {1, 0}, {4, 5}}};
  LMTrainHyper h;
  h.stage1_steps = 40;
  h.stage2_steps = 40;
  const auto r = train_two_stage(data, data, p, h);
  for (const auto& name : p.freeze_spec) EXPECT_EQ(r.params.parameter(name), p.parameter(name)) << name;
  for (const auto& name : trainable_parameters(p)) EXPECT_NE(r.params.parameter(name), p.parameter(name)) << name;
  ASSERT_EQ(r.history.size(), 80u);
  EXPECT_EQ(r.history.front().stage, 1);
  EXPECT_EQ(r.history.back().stage, 2);
  EXPECT_EQ(r.history.back().step, 39u);
}

TEST(TrainTwoStage, FreezingEverythingChangesNothing) {
  Rng rng(12);
  ToyLMParams p = ToyLMParams::init(small_config(6), 4);
  const auto all = p.parameter_names();
  p.freeze_spec = {all.begin(), all.end()};
  std::vector<LMExample> data{{gaussian_matrix(rng, 2, 4, 1.0), {0, 1}, {2, 3}}};
  LMTrainHyper h;
  h.stage1_steps = 5;
  h.stage2_steps = 5;
  const auto r = train_two_stage(data, data, p, h);
  for (const auto& name : all) EXPECT_EQ(r.params.parameter(name), p.parameter(name));
  for (const auto& s : r.history) EXPECT_EQ(s.loss, r.history.front().loss);
}

TEST(TrainTwoStage, EmptySecondStageEqualsStageOneOnly) {
  Rng rng(13);
  const ToyLMParams p = ToyLMParams::init(small_config(6), 4);
  std::vector<LMExample> data{{gaussian_matrix(rng, 2, 4, 1.0), {0, 1}, {2, 3}}};
  LMTrainHyper h;
  h.stage1_steps = 30;
  h.stage2_steps = 30;
  const auto a = train_two_stage(data, {}, p, h);
  h.stage2_steps = 0;
  const auto b = train_two_stage(data, data, p, h);
  EXPECT_EQ(a.history.size(), 30u);
  for (const auto& name : p.parameter_names()) EXPECT_EQ(a.params.parameter(name), b.params.parameter(name));
  EXPECT_EQ(a.final_loss, b.final_loss);
}

TEST(TrainTwoStage, DivergenceNamesStageAndStep) {
  Rng rng(14);
  std::vector<LMExample> data{{gaussian_matrix(rng, 2, 4, 1.0), {0, 1}, {2, 3}}};
  LMTrainHyper h;
  h.optimizer.kind = OptimizerKind::sgd;
  h.optimizer.learning_rate = 1e306;
  h.stage1_steps = 20;
  try {
    train_two_stage(data, {}, ToyLMParams::init(small_config(6), 4), h);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("stage 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("step"), std::string::npos) << msg;
  }
}

TEST(TrainTwoStage, MemorizesSinglePairAndDecodesIt) {
  Rng rng(15);
  ToyLMConfig config = small_config(10);
  config.embed_dim = 16;
  config.adapter_rank = 4;
  const LMExample ex{gaussian_matrix(rng, 3, 4, 1.0), {2, 3}, {7, 4, 9, Vocabulary::kStop}};
  LMTrainHyper h;
  h.stage1_steps = 600;
  h.stage2_steps = 0;
  const auto r = train_two_stage(std::vector<LMExample>{ex}, {}, ToyLMParams::init(config, 2), h);
  EXPECT_LT(r.final_loss, 0.1);
  for (std::size_t l = 0; l < ex.answer.size(); ++l) {
    const TokenSequence prefix(ex.answer.begin(), ex.answer.begin() + static_cast<long>(l));
    EXPECT_EQ(argmax(next_token_dist(r.params, ex.visual, ex.instruction, prefix)), ex.answer[l]);
  }
  EXPECT_EQ(greedy_decode(r.params, ex.visual, ex.instruction, 10, Vocabulary::kStop), (TokenSequence{7, 4, 9}));
}

TEST(TrainTwoStage, VisualConditioningMatters) {
  Rng rng(16);
  ToyLMConfig config = small_config(10);
  config.embed_dim = 16;
  config.adapter_rank = 4;
  const Matrix va = gaussian_matrix(rng, 3, 4, 1.0);
  const Matrix vb = gaussian_matrix(rng, 3, 4, 1.0);
  const std::vector<LMExample> data{{va, {2, 3}, {5, 6, Vocabulary::kStop}}, {vb, {2, 3}, {8, 9, Vocabulary::kStop}}};
  LMTrainHyper h;
  h.stage1_steps = 600;
  h.stage2_steps = 0;
  const auto r = train_two_stage(data, {}, ToyLMParams::init(config, 3), h);
  EXPECT_GT(sequence_log_prob(r.params, va, {2, 3}, data[0].answer), sequence_log_prob(r.params, vb, {2, 3}, data[0].answer));
  EXPECT_GT(sequence_log_prob(r.params, vb, {2, 3}, data[1].answer), sequence_log_prob(r.params, va, {2, 3}, data[1].answer));
}

TEST(Vocabulary, FrequencyThenLexicographicOrder) {
  const std::vector<std::string> texts{"b a c", "a b", "a d", "肾 肾"};
  const Vocabulary v = Vocabulary::build(texts, 6);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"<unk>", "<stop>", "a", "b", "肾", "c"}));
  EXPECT_EQ(v.encode("A b zz", true), (TokenSequence{2, 3, Vocabulary::kUnk, Vocabulary::kStop}));
  EXPECT_EQ(v.decode({2, 5, Vocabulary::kStop, 3}), "a c");
  EXPECT_THROW(Vocabulary::from_tokens({"x", "x"}), ConfigError);
}

TEST(Checkpoint, RoundTripsWeightsAdaptersAndVocabulary) {
  Rng rng(17);
  ToyLMParams p = ToyLMParams::init(small_config(8), 9);
  for (auto& [base, a] : p.adapters) a.b = gaussian_matrix(rng, a.b.rows(), a.b.cols(), 1.0);
  p.freeze_spec.erase(names::kAttnKey);
  const Vocabulary vocab = Vocabulary::from_tokens({"<unk>", "<stop>", "a", "b", "c", "d", "e", "f"});
  const auto path = std::filesystem::temp_directory_path() / "mmfuse_toylm_test.json";
  write_text_file_atomic(path, toylm_to_json(p, &vocab));
  Vocabulary back_vocab;
  const ToyLMParams back = load_toylm(path, &back_vocab);
  for (const auto& name : p.parameter_names()) EXPECT_EQ(back.parameter(name), p.parameter(name)) << name;
  EXPECT_EQ(back.freeze_spec, p.freeze_spec);
  EXPECT_EQ(back.adapters.at(names::kOutputWeight).scale, p.adapters.at(names::kOutputWeight).scale);
  EXPECT_EQ(back_vocab.tokens(), vocab.tokens());
  std::filesystem::remove(path);
}
