#include <benchmark/benchmark.h>

#include "khtext/classifiers.hpp"
#include "khtext/rng.hpp"

namespace {

khtext::ClassifierConfig config_for(std::int64_t arch) {
  khtext::ClassifierConfig c;
  c.arch = static_cast<khtext::nn::Arch>(arch);
  c.k = 7;
  return c;
}

khtext::DocMatrix random_doc(const khtext::ClassifierConfig& c, std::size_t length, khtext::Rng& rng) {
  khtext::DocMatrix doc;
  doc.rows = khtext::nn::Tensor({length, c.m});
  doc.length = length;
  for (auto& x : doc.rows.data) x = rng.uniform(-1.0, 1.0);
  return doc;
}

void BM_ClassifierForward(benchmark::State& state) {
  const auto c = config_for(state.range(0));
  khtext::Rng rng(3);
  const auto params = khtext::ClassifierParams::initialize(c, rng);
  const auto doc = random_doc(c, static_cast<std::size_t>(state.range(1)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(khtext::forward(c, params, doc));
}

void BM_ClassifierForwardBackward(benchmark::State& state) {
  const auto c = config_for(state.range(0));
  khtext::Rng rng(3);
  const auto params = khtext::ClassifierParams::initialize(c, rng);
  auto grads = khtext::ClassifierParams::allocate(c);
  const auto doc = random_doc(c, static_cast<std::size_t>(state.range(1)), rng);
  const std::vector<int> labels = {2};
  khtext::ForwardCache cache;
  for (auto _ : state) {
    const auto logits = khtext::forward(c, params, doc, true, &rng, &cache);
    const auto lg = khtext::document_loss(c, logits, labels);
    khtext::backward(c, params, doc, cache, lg.grad, grads);
  }
}

// {arch, document length}
void arch_lengths(benchmark::internal::Benchmark* b) {
  for (int arch : {0, 1, 2})
    for (int len : {30, 256}) b->Args({arch, len});
}

BENCHMARK(BM_ClassifierForward)->Apply(arch_lengths);
BENCHMARK(BM_ClassifierForwardBackward)->Apply(arch_lengths);

}  // namespace
