#include <benchmark/benchmark.h>

#include <string>

#include "khtext/synth.hpp"
#include "khtext/textproc.hpp"

namespace {

// One long line of synthetic Khmer words.
std::string khmer_line(std::size_t words) {
  khtext::SynthConfig cfg;
  cfg.k = 2;
  cfg.docs_per_class = words / 20 + 1;
  cfg.seed = 5;
  std::string line;
  for (const auto& doc : khtext::synth_dataset(cfg).docs)
    for (const auto& t : doc.tokens) {
      if (!line.empty()) line += ' ';
      line += t;
    }
  return line;
}

void BM_KccSplit(benchmark::State& state) {
  const std::string text = khmer_line(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(khtext::kcc_split(text));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_KccSplit)->Arg(100)->Arg(10000);

void BM_ExtractNgrams(benchmark::State& state) {
  const auto unit = static_cast<khtext::SubwordUnit>(state.range(0));
  const auto cfg = khtext::SubwordConfig::defaults(unit);
  const std::string word = "ភាសាខ្មែរ";
  for (auto _ : state) benchmark::DoNotOptimize(khtext::extract_ngrams(word, cfg));
}
BENCHMARK(BM_ExtractNgrams)
    ->Arg(static_cast<int>(khtext::SubwordUnit::codepoint))
    ->Arg(static_cast<int>(khtext::SubwordUnit::kcc));

void BM_HashNgram(benchmark::State& state) {
  const std::string gram = "<ខ្មែ";
  for (auto _ : state) benchmark::DoNotOptimize(khtext::hash_ngram(gram, 2'000'000));
}
BENCHMARK(BM_HashNgram);

}  // namespace
