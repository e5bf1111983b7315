#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "synthdial/metrics.hpp"

using namespace synthdial;

namespace {

// Dialogue-like documents over a small clinical vocabulary.
std::vector<metrics::Tokens> corpus(std::size_t docs, std::size_t len) {
  static const std::vector<std::string> vocab = {
      "doctor", "patient", "pain", "chest", "how", "long", "have", "you",
      "had", "the", "cough", "fever", "yes", "no", "days", "take",
      "aspirin", "daily", "any", "shortness", "of", "breath", "worse", "better"};
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  std::vector<metrics::Tokens> out(docs);
  for (auto& d : out) {
    for (std::size_t i = 0; i < len; ++i) d.push_back(vocab[pick(rng)]);
  }
  return out;
}

std::vector<metrics::IdText> texts(std::size_t n, std::size_t len,
                                   std::uint64_t seed) {
  auto docs = corpus(n, len);
  std::mt19937_64 rng(seed);
  std::vector<metrics::IdText> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::shuffle(docs[i].begin(), docs[i].end(), rng);
    std::string t;
    for (std::size_t k = 0; k < docs[i].size(); ++k) {
      t += docs[i][k];
      t += k % 12 == 11 ? ".\n" : " ";
    }
    out.push_back({"d" + std::to_string(i), t});
  }
  return out;
}

const Lexicon& lexicon() {
  static const Lexicon lex({{"chest pain", "C1", "chest pain", SemanticGroup::parse("DISO")},
                            {"cough", "C2", "cough", SemanticGroup::parse("DISO")},
                            {"fever", "C3", "fever", SemanticGroup::parse("DISO")},
                            {"aspirin", "C4", "aspirin", SemanticGroup::parse("CHEM")}});
  return lex;
}

void BM_SelfBleu(benchmark::State& state) {
  const auto docs = corpus(static_cast<std::size_t>(state.range(0)), 400);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        metrics::self_bleu(docs, 4, metrics::Smoothing::add_epsilon()));
  }
}

void BM_SelfBleuSerial(benchmark::State& state) {
  const auto docs = corpus(static_cast<std::size_t>(state.range(0)), 400);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        metrics::self_bleu_serial(docs, 4, metrics::Smoothing::add_epsilon()));
  }
}

void BM_EvaluateRun(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto gen = texts(n, 400, 1);
  const auto ref = texts(n, 400, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(metrics::evaluate_run(gen, ref, lexicon()));
  }
}

void BM_EvaluateRunSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto gen = texts(n, 400, 1);
  const auto ref = texts(n, 400, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(metrics::evaluate_run_serial(gen, ref, lexicon()));
  }
}

}  // namespace

BENCHMARK(BM_SelfBleu)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SelfBleuSerial)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvaluateRun)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvaluateRunSerial)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
