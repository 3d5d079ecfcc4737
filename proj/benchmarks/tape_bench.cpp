// Microbenchmarks for the differentiation tape: forward composition and
// the reverse sweep on matmul-plus-nonlinearity graphs of growing size.
#include <benchmark/benchmark.h>

#include "gca/rng.hpp"
#include "gca/tape.hpp"
#include "gca/tensor.hpp"

using namespace gca;
using ad::Tape;
using ad::Var;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t(Shape{r, c});
  for (double& v : t.v) v = 0.5 * rng.normal();
  return t;
}

void bench_matmul_chain(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(7);
  const Tensor a = random_matrix(n, n, rng);
  const Tensor x = random_matrix(n, 1, rng);
  for (auto _ : state) {
    Tape tape;
    Var w = tape.leaf(a);
    Var h = tape.leaf(x);
    for (int depth = 0; depth < 4; ++depth) h = ad::tanh(ad::matmul(w, h));
    Var loss = ad::sum(ad::square(h));
    tape.backward(loss);
    benchmark::DoNotOptimize(w.grad().v.data());
  }
  state.SetComplexityN(static_cast<benchmark::IterationCount>(n));
}

void bench_elementwise_sweep(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(11);
  const Tensor x = random_matrix(n, n, rng);
  for (auto _ : state) {
    Tape tape;
    Var v = tape.leaf(x);
    Var y = ad::sum(ad::square(ad::sigmoid(v) * ad::sin(v) + v));
    tape.backward(y);
    benchmark::DoNotOptimize(v.grad().v.data());
  }
}

}  // namespace

BENCHMARK(bench_matmul_chain)->Arg(8)->Arg(32)->Arg(64)->Complexity();
BENCHMARK(bench_elementwise_sweep)->Arg(16)->Arg(64)->Arg(128);

BENCHMARK_MAIN();
