// Microbenchmarks over the embedded reduction kernel: tier comparison,
// cost of a type phase change in both recovery modes, and compile time.

#include <benchmark/benchmark.h>

#include <string>

#include "dl/harness.hpp"
#include "dl/parse.hpp"
#include "dl/vm.hpp"

namespace {

const char* kSumStable = R"(mk <- function(n) {
  res <- c()
  k <- 1
  for (i in 1:n) {
    res[[i]] <- k
    k <- k + 1
    if (k > 7) k <- 1
  }
  res
}
sum <- function() {
  total <- 0
  for (i in 1:n) total <- total + data[[i]]
  total
}
n <- 2000
data <- mk(n)
acc <- 0
for (r in 1:20) acc <- acc + sum()
print(acc)
)";

const char* kSumPhased = R"(mkint <- function(n) {
  res <- c()
  k <- 1
  for (i in 1:n) {
    res[[i]] <- k
    k <- k + 1
    if (k > 7) k <- 1
  }
  res
}
mkfloat <- function(n) {
  res <- c()
  k <- 0.25
  for (i in 1:n) {
    res[[i]] <- k
    k <- k + 0.5
    if (k > 3.3) k <- 0.25
  }
  res
}
sum <- function() {
  total <- 0
  for (i in 1:n) total <- total + data[[i]]
  total
}
n <- 2000
ints <- mkint(n)
floats <- mkfloat(n)
data <- ints
for (r in 1:10) print(sum())
data <- floats
for (r in 1:10) print(sum())
data <- ints
for (r in 1:10) print(sum())
)";

dl::VmConfig mode_config(dl::BenchMode mode) {
  return dl::bench_config(mode, dl::BenchOptions{});
}

void run_source(benchmark::State& state, const char* source,
                dl::BenchMode mode) {
  for (auto _ : state) {
    dl::RunResult r = dl::run_program_source(source, mode_config(mode));
    benchmark::DoNotOptimize(r.output.data());
  }
}

void BM_sum_interp(benchmark::State& state) {
  run_source(state, kSumStable, dl::BenchMode::Interp);
}
BENCHMARK(BM_sum_interp)->Unit(benchmark::kMillisecond);

void BM_sum_jit(benchmark::State& state) {
  run_source(state, kSumStable, dl::BenchMode::Deopt);
}
BENCHMARK(BM_sum_jit)->Unit(benchmark::kMillisecond);

void BM_phase_change_deopt(benchmark::State& state) {
  run_source(state, kSumPhased, dl::BenchMode::Deopt);
}
BENCHMARK(BM_phase_change_deopt)->Unit(benchmark::kMillisecond);

void BM_phase_change_deoptless(benchmark::State& state) {
  run_source(state, kSumPhased, dl::BenchMode::Deoptless);
}
BENCHMARK(BM_phase_change_deoptless)->Unit(benchmark::kMillisecond);

// Time spent inside translate/optimize/emit, isolated via the VM's own
// compile-time counter over a run that compiles exactly once.
void BM_compile(benchmark::State& state) {
  for (auto _ : state) {
    dl::RunResult r =
        dl::run_program_source(kSumStable, mode_config(dl::BenchMode::Deopt));
    state.SetIterationTime((double)r.stats.compile_ns * 1e-9);
  }
}
BENCHMARK(BM_compile)->UseManualTime()->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
