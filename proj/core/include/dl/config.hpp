#pragma once

#include <cstdint>
#include <iostream>

namespace dl {

enum TraceBit : unsigned {
  kTraceFeedback = 1u << 0,
  kTraceDeopt = 1u << 1,
  kTraceOsr = 1u << 2,
};

struct VmConfig {
  // Tiering. Thresholds of 0 compile immediately; -1 never.
  bool jit = true;
  bool osr_in = true;
  int inv_threshold = 10;
  int edge_threshold = 200;

  // Deoptless.
  bool deoptless = false;
  int deoptless_max = 5;
  int ctx_max_stack = 16;
  int ctx_max_env = 32;

  // Forced guard failures (seeded, deterministic).
  double force_fail_p = 0.0;
  uint64_t seed = 0;

  // Test-only: drop the framestate-use restriction of dead-store
  // elimination for received-from-outside locals.
  bool unsafe_dse = false;

  unsigned trace = 0;                 // TraceBit mask
  std::ostream* out = &std::cout;     // program output (print)
  std::ostream* trace_out = &std::cerr;

  // Entry-type subtype checks and dispatch assertions.
  bool debug_checks = true;

  int max_call_depth = 10000;
};

}  // namespace dl
