#include <benchmark/benchmark.h>

#include <string>

#include <mmfuse/datagen.hpp>
#include <mmfuse/metrics.hpp>
#include <mmfuse/numcore.hpp>
#include <mmfuse/random.hpp>
#include <mmfuse/sampler.hpp>

using namespace mmfuse;

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Matrix a = gaussian_matrix(rng, n, n, 1.0);
  const Matrix b = gaussian_matrix(rng, n, n, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256)->Complexity(benchmark::oNCubed);

static void BM_ScoreGroup(benchmark::State& state) {
  GroupSpec spec;
  spec.seed = 3;
  const RedundantGroup g = make_group(spec, 0).group;
  const ScorerParams p = ScorerParams::initial(spec.channels, spec.channels, state.range(0), 4);
  const auto mode = state.range(1) == 0 ? ScoreMode::feature : ScoreMode::attention;
  for (auto _ : state) benchmark::DoNotOptimize(score_group(g, p, mode));
}
BENCHMARK(BM_ScoreGroup)->Args({1, 0})->Args({1, 1})->Args({2, 1})->Args({4, 1});

static std::string sentence(std::size_t words) {
  static const char* pool[] = {"thyroid", "nodule", "left", "lobe", "hypoechoic", "margin", "is", "smooth"};
  std::string s;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) s += ' ';
    s += pool[(i * 5 + i / 3) % 8];
  }
  return s;
}

static void BM_Tokenize(benchmark::State& state) {
  const std::string text = sentence(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(tokenize(text));
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_Tokenize)->Range(8, 512);

static void BM_Bleu(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const TokenList cand = tokenize(sentence(n));
  const TokenList ref = tokenize(sentence(n + 3));
  for (auto _ : state) benchmark::DoNotOptimize(bleu(cand, ref, BleuWeights{}));
}
BENCHMARK(BM_Bleu)->Range(8, 512);
BENCHMARK_MAIN();
