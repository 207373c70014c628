#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <mmfuse/error.hpp>
#include <mmfuse/gradcheck.hpp>
#include <mmfuse/numcore.hpp>
#include <mmfuse/optim.hpp>
#include <mmfuse/random.hpp>

using namespace mmfuse;

TEST(Matmul, IdentityAndZero) {
  const Matrix a{{1, 2}, {3, 4}};
  EXPECT_EQ(matmul(Matrix::identity(2), a), a);
  EXPECT_EQ(matmul(Matrix(2, 2), a), Matrix(2, 2));
}

TEST(Matmul, HandProduct) {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{5, 6}, {7, 8}};
  EXPECT_EQ(matmul(a, b), (Matrix{{19, 22}, {43, 50}}));
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    matmul(Matrix(2, 3), Matrix(2, 3));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
  }
}

TEST(Matmul, TransposedVariantsAgree) {
  Rng rng(3);
  const Matrix a = gaussian_matrix(rng, 4, 3, 1.0);
  const Matrix b = gaussian_matrix(rng, 4, 5, 1.0);
  const Matrix c = gaussian_matrix(rng, 6, 3, 1.0);
  const Matrix tn = matmul_tn(a, b);
  const Matrix ref_tn = matmul(transpose(a), b);
  const Matrix nt = matmul_nt(a, c);
  const Matrix ref_nt = matmul(a, transpose(c));
  for (std::size_t i = 0; i < tn.size(); ++i) EXPECT_NEAR(tn.data()[i], ref_tn.data()[i], 1e-12);
  for (std::size_t i = 0; i < nt.size(); ++i) EXPECT_NEAR(nt.data()[i], ref_nt.data()[i], 1e-12);
}

TEST(Matmul, AssociativeOnRandomTriples) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = gaussian_matrix(rng, 4, 4, 1.0);
    const Matrix b = gaussian_matrix(rng, 4, 4, 1.0);
    const Matrix c = gaussian_matrix(rng, 4, 4, 1.0);
    const Matrix l = matmul(matmul(a, b), c);
    const Matrix r = matmul(a, matmul(b, c));
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) {
      num = std::max(num, std::abs(l.data()[i] - r.data()[i]));
      den = std::max(den, std::abs(l.data()[i]));
    }
    EXPECT_LE(num / den, 1e-9);
  }
}

TEST(Matrix, RejectsNonFiniteAndRaggedInput) {
  EXPECT_THROW(Matrix(1, 2, std::vector<double>{1.0, NAN}), NumericError);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1.0, 2.0, 3.0}), ShapeError);
  EXPECT_THROW((Matrix{{1, 2}, {3}}), ShapeError);
}

TEST(Softmax, UniformUnderConstantInput) {
  for (double c : {-7.0, 0.0, 3.5, 800.0}) {
    const std::vector<double> v{c, c, c};
    for (double p : softmax(v)) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
  }
}

TEST(Softmax, LnTwoGivesOneThirdTwoThirds) {
  const std::vector<double> v{0.0, std::log(2.0)};
  const auto p = softmax(v);
  EXPECT_NEAR(p[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 2.0 / 3.0, 1e-15);
}

TEST(Softmax, ShiftInvariant) {
  const std::vector<double> v{0.3, -1.2, 2.5, 0.0};
  std::vector<double> shifted = v;
  for (double& x : shifted) x += 5.0;
  const auto a = softmax(v);
  const auto b = softmax(shifted);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(Softmax, RejectsEmptyAndNonPositiveTemperature) {
  EXPECT_THROW(softmax(std::vector<double>{}), DomainError);
  EXPECT_THROW(softmax(std::vector<double>{1.0}, 0.0), DomainError);
  EXPECT_THROW(softmax(std::vector<double>{1.0}, -1.0), DomainError);
}

TEST(Softmax, SumsToOneAndPreservesArgmax) {
  Rng rng(5);
  std::uniform_int_distribution<int> len(1, 12);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto v = gaussian_vector(rng, static_cast<std::size_t>(len(rng)), 10.0);
    for (double tau : {0.05, 1.0, 20.0}) {
      const auto p = softmax(v, tau);
      double sum = 0.0;
      for (double x : p) {
        EXPECT_GE(x, 0.0);  // tiny tau underflows far-off entries
        EXPECT_LE(x, 1.0);
        sum += x;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
      EXPECT_EQ(argmax(p), argmax(v));
    }
  }
}

TEST(CrossEntropy, SpecValues) {
  const std::vector<double> half{0.5, 0.5}, one{1.0, 0.0};
  EXPECT_NEAR(cross_entropy(half, half), std::log(2.0), 1e-15);
  EXPECT_NEAR(cross_entropy(one, one), 0.0, 1e-15);
  EXPECT_NEAR(cross_entropy(one, half), std::log(2.0), 1e-15);
  EXPECT_THROW(cross_entropy(half, std::vector<double>{1.0}), ShapeError);
}

TEST(CrossEntropy, ClampsZeroProbability) {
  const std::vector<double> p{0.0, 1.0}, q{1.0, 0.0};
  EXPECT_NEAR(cross_entropy(p, q), -std::log(kCrossEntropyFloor), 1e-9);
}

TEST(CrossEntropy, GibbsInequalityOnRandomDistributions) {
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = softmax(gaussian_vector(rng, 6, 2.0));
    const auto q = softmax(gaussian_vector(rng, 6, 2.0));
    EXPECT_GE(cross_entropy(p, q), cross_entropy(p, p) - 1e-12);
    EXPECT_NEAR(cross_entropy(p, p), entropy(p), 1e-12);
  }
}

TEST(Argmax, LowestIndexWinsTies) {
  EXPECT_EQ(argmax(std::vector<double>{0.5, 0.5}), 0u);
  EXPECT_EQ(argmax(std::vector<double>{0.1, 0.9, 0.9}), 1u);
}

TEST(LogSumExp, MatchesDirectFormulaAndSurvivesLargeInputs) {
  const std::vector<double> v{0.1, 0.2, -0.4};
  EXPECT_NEAR(log_sum_exp(v), std::log(std::exp(0.1) + std::exp(0.2) + std::exp(-0.4)), 1e-14);
  EXPECT_NEAR(log_sum_exp(std::vector<double>{1000.0, 1000.0}), 1000.0 + std::log(2.0), 1e-12);
}

TEST(Sigmoid, StableAtExtremes) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(40.0), 1.0, 1e-15);
  EXPECT_GT(sigmoid(-800.0), -1e-300);
  EXPECT_TRUE(std::isfinite(sigmoid(-800.0)));
}

TEST(FiniteDiff, SpecExamples) {
  const auto sq = [](std::span<const double> x) { return x[0] * x[0]; };
  const std::vector<double> x3{3.0};
  EXPECT_NEAR(finite_diff_grad(sq, x3, 1e-5)[0], 6.0, 1e-6);

  const auto constant = [](std::span<const double>) { return 4.2; };
  for (double g : finite_diff_grad(constant, std::vector<double>{1.0, -2.0, 3.0}, 1e-5)) EXPECT_NEAR(g, 0.0, 1e-9);

  const auto sumsq = [](std::span<const double> x) { return x[0] * x[0] + x[1] * x[1]; };
  const auto g = finite_diff_grad(sumsq, std::vector<double>{1.0, 2.0}, 1e-5);
  EXPECT_NEAR(g[0], 2.0, 1e-6);
  EXPECT_NEAR(g[1], 4.0, 1e-6);
}

TEST(FiniteDiff, NonFiniteValueNamesCoordinate) {
  const auto f = [](std::span<const double> x) { return x[1] > 1.0 ? std::log(-1.0) : 0.0; };
  try {
    finite_diff_grad(f, std::vector<double>{0.0, 1.0}, 1e-3);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("coordinate 1"), std::string::npos) << e.what();
  }
}

TEST(CheckGradients, SpecExamples) {
  const std::vector<double> a{1.0, -2.0, 0.5};
  const auto same = check_gradients(a, a, 1e-4, "x");
  EXPECT_EQ(same.max_relative_error, 0.0);
  EXPECT_TRUE(same.pass);
  EXPECT_EQ(same.num_entries_checked, 3u);

  const auto off = check_gradients(std::vector<double>{1.0, 0.0}, std::vector<double>{1.0, 1e-3}, 1e-4);
  EXPECT_FALSE(off.pass);
  EXPECT_NEAR(off.max_relative_error, 1.0, 1e-12);  // |0 - 1e-3| / (0 + 1e-3)

  EXPECT_THROW(check_gradients(std::vector<double>{}, std::vector<double>{}, 1e-4), ShapeError);
  EXPECT_THROW(check_gradients(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}, 1e-4), ShapeError);
}

TEST(CheckGradients, MergeKeepsWorstCase) {
  GradReport acc = check_gradients(std::vector<double>{1.0}, std::vector<double>{1.0}, 1e-4, "w");
  merge_report(acc, check_gradients(std::vector<double>{1.0}, std::vector<double>{1.1}, 1e-4, "w"));
  merge_report(acc, check_gradients(std::vector<double>{2.0}, std::vector<double>{2.0}, 1e-4, "w"));
  EXPECT_FALSE(acc.pass);
  EXPECT_NEAR(acc.max_relative_error, 0.1 / 2.1, 1e-12);
  EXPECT_EQ(acc.num_entries_checked, 3u);
}

TEST(Optimizer, SgdAndAdamFirstStep) {
  std::vector<double> p{1.0, -1.0};
  const std::vector<double> g{0.5, -2.0};
  Optimizer sgd(OptimizerConfig{.kind = OptimizerKind::sgd, .learning_rate = 0.1});
  sgd.update("p", p, g);
  EXPECT_NEAR(p[0], 0.95, 1e-15);
  EXPECT_NEAR(p[1], -0.8, 1e-15);

  // The bias-corrected first Adam step moves every coordinate by about lr * sign(g).
  std::vector<double> q{1.0, -1.0};
  Optimizer adam(OptimizerConfig{.kind = OptimizerKind::adam, .learning_rate = 1e-3});
  adam.update("q", q, g);
  EXPECT_NEAR(q[0], 1.0 - 1e-3, 1e-10);
  EXPECT_NEAR(q[1], -1.0 + 1e-3, 1e-10);
  EXPECT_THROW(parse_optimizer_kind("rmsprop"), ConfigError);
}
