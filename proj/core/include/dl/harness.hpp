#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dl/config.hpp"
#include "dl/vm.hpp"

namespace dl {

enum class BenchMode { Interp, Deopt, Deoptless };

const char* bench_mode_name(BenchMode m);
bool parse_bench_mode(const std::string& s, BenchMode& out);

// One phase of a benchmark: global (re)bindings applied before its first
// iteration, then a fixed number of timed calls of the entry function.
struct BenchPhase {
  std::vector<std::pair<std::string, Value>> globals;
  int iters = 5;
};

struct BenchSpec {
  std::string name;
  std::string source;       // defines the entry function and its helpers
  std::string entry = "run";  // 0-argument function called per iteration
  std::vector<BenchPhase> phases;
  int executions = 1;  // fresh VM per execution
  int warmup = 5;      // leading iterations excluded from summaries
};

struct BenchRecord {
  std::string benchmark;
  std::string mode;
  int execution = 0;
  int iteration = 0;  // running index across phases within one execution
  uint64_t wall_ns = 0;
  uint64_t deopt_count = 0;       // deltas for this iteration
  uint64_t deoptless_hit = 0;
  uint64_t deoptless_compile = 0;
  uint64_t compile_ns = 0;
};

struct BenchOptions {
  double force_fail_p = 0.0;
  uint64_t seed = 1;
};

struct BenchRun {
  std::vector<BenchRecord> records;
  // Everything the program printed plus one rendered result line per
  // iteration; must be byte-identical across modes.
  std::string output;
};

VmConfig bench_config(BenchMode mode, const BenchOptions& opts);
BenchRun run_bench(const BenchSpec& spec, BenchMode mode,
                   const BenchOptions& opts = {});

// The shipped benchmarks (sizes are desk-scale defaults).
BenchSpec bench_vector_sum(int len = 100000);
BenchSpec bench_colsum(int cols = 50, int rows = 100000);
BenchSpec bench_nbody(int bodies = 100);
BenchSpec bench_mandelbrot(int side = 20, int max_iter = 25);
BenchSpec bench_prefix_sum(int len = 10000);

// Single-phase variants of all five benchmarks sized so one iteration is
// ~10^4 guarded operations, for the random-invalidation experiment
// (30 iterations x 3 executions each).
std::vector<BenchSpec> randfail_suite();

// CSV with header
// benchmark,mode,execution,iteration,wall_ns,deopt_count,deoptless_hit,
// deoptless_compile,compile_ns and LF line endings.
void emit_csv(const std::vector<BenchRecord>& records,
              const std::string& path);
std::vector<BenchRecord> read_csv(const std::string& path);

// Parses, lowers and runs a program under `cfg`, capturing printed output;
// a front-end or runtime error is rendered as a final "error: <message>"
// line. Used as the differential-testing driver.
struct RunResult {
  std::string output;
  VmStats stats;
};
RunResult run_program_source(const std::string& source, VmConfig cfg);

}  // namespace dl
