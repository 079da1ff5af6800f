#include <benchmark/benchmark.h>

#include "pft/io/checkpoint.hpp"
#include "pft/losses/losses.hpp"
#include "pft/numerics/ops.hpp"
#include "pft/pairing/pairing.hpp"
#include "pft/synthdata/dataset.hpp"

namespace {

pft::Tensor random_matrix(pft::Rng& rng, std::size_t r, std::size_t c, bool grad = false) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(r * c);
  for (double& x : v) x = n(rng);
  return pft::Tensor::from({r, c}, std::move(v), grad);
}

void BM_MatmulForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  pft::Rng rng(1);
  const pft::Tensor a = random_matrix(rng, 64, n, true);
  const pft::Tensor b = random_matrix(rng, n, n, true);
  for (auto _ : state) {
    pft::Tape tape;
    const pft::Tensor loss = pft::sum(pft::relu(pft::matmul(a, b)));
    pft::backward(loss, tape);
    benchmark::DoNotOptimize(b.grad().data());
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_MatmulForwardBackward)->Arg(64)->Arg(128)->Arg(512);

void BM_ExtractorForward(benchmark::State& state) {
  pft::Rng rng(2);
  const pft::FeatureExtractor f({32, 512, static_cast<std::size_t>(state.range(0)), 3}, rng);
  const pft::Tensor x = random_matrix(rng, 64, 32);
  for (auto _ : state) {
    pft::NoGradGuard guard;
    benchmark::DoNotOptimize(f.extract(x).final().values().data());
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_ExtractorForward)->Arg(64)->Arg(512);

// One adaptation step: translator forward, consistency loss, backward.
void BM_AdaptationStep(benchmark::State& state) {
  pft::Rng rng(3);
  const std::size_t d = 128;
  pft::Translator t(d, 32, rng);
  pft::Classifier c(d, 2, rng);
  pft::set_frozen(c, true);
  const pft::Tensor f = random_matrix(rng, 50, d);
  const pft::Tensor teacher = c.classify(f);
  for (auto _ : state) {
    pft::Tape tape;
    const pft::Tensor loss = pft::target_loss(teacher, c.classify(t.translate(f).final()));
    pft::backward(loss, tape);
  }
}
BENCHMARK(BM_AdaptationStep);

void BM_ProcrustesResidual(benchmark::State& state) {
  const pft::DatasetSpec spec;
  const pft::GeneratorBasis basis = pft::make_basis(spec);
  const auto a = pft::make_subject(spec, basis, 0, pft::Population::source);
  const auto b = pft::make_subject(spec, basis, 1, pft::Population::source);
  for (auto _ : state) benchmark::DoNotOptimize(pft::procrustes_residual(a.landmarks, b.landmarks));
}
BENCHMARK(BM_ProcrustesResidual);

void BM_CosinePairs(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  pft::Rng rng(4);
  const pft::Tensor f = random_matrix(rng, n, 128);
  std::vector<double> loss(n, 0.0);
  std::vector<int> subjects(n);
  for (std::size_t i = 0; i < n; ++i) subjects[i] = static_cast<int>(i % 20);
  for (auto _ : state) benchmark::DoNotOptimize(pft::cosine_pairs(f, loss, subjects, 0.1));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_CosinePairs)->Arg(1000)->Arg(4000);

void BM_ContainerRoundtrip(benchmark::State& state) {
  pft::Rng rng(5);
  pft::Container c;
  c.put("w", random_matrix(rng, 512, 512));
  for (auto _ : state) {
    const auto bytes = pft::encode(c);
    benchmark::DoNotOptimize(pft::decode(bytes).entries().size());
  }
  state.SetBytesProcessed(state.iterations() * 512 * 512 * 8);
}
BENCHMARK(BM_ContainerRoundtrip);

}  // namespace

BENCHMARK_MAIN();
