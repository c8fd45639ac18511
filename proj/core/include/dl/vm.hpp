#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "dl/bytecode.hpp"
#include "dl/config.hpp"
#include "dl/context.hpp"
#include "dl/feedback.hpp"
#include "dl/frame.hpp"
#include "dl/ir.hpp"

namespace dl {

struct GlobalCell {
  std::string name;
  std::optional<Value> value;
  uint64_t version = 0;
};

struct ContEntry {
  DeoptContext ctx;
  std::unique_ptr<Continuation> cont;
  int insertion = 0;
};

// Per-(function, checkpoint-pc) dispatch table, kept sorted by
// (specificity desc, insertion asc). Entries are never evicted; retired
// entries still occupy their slot.
struct ContinuationTable {
  std::vector<ContEntry> entries;
  int next_insertion = 0;

  bool full(int bound) const { return (int)entries.size() >= bound; }
  void insert_sorted(DeoptContext ctx, std::unique_ptr<Continuation> cont);
};

struct FunctionState {
  uint64_t inv_count = 0;
  uint64_t edge_count = 0;
  FeedbackStore feedback;
  std::unique_ptr<Continuation> compiled;  // whole-function version
  bool pending_full_compile = false;
  bool uncompilable = false;
  std::map<int, ContinuationTable> tables;  // keyed by exit bytecode pc
};

struct VmStats {
  uint64_t deopt_count = 0;
  uint64_t deoptless_hit = 0;
  uint64_t deoptless_compile = 0;
  uint64_t true_deopt = 0;
  uint64_t osr_in_count = 0;
  uint64_t compile_count = 0;
  uint64_t compile_ns = 0;
};

class Vm {
 public:
  explicit Vm(VmConfig cfg = {});

  // Loads a program (keeps it alive) and runs its top level.
  Value run_main(const LoweredProgram& prog);

  // Calls a function with evaluated arguments, choosing a tier.
  Value call(const BytecodeFunction* fn, std::vector<Value> args);

  // Continues baseline interpretation from a captured state.
  Value resume(const FrameState& fs);

  // Deopt runtime entry point. `origin` is the continuation whose guard
  // failed (null when invoked synthetically from tests).
  Value handle_deopt(Continuation* origin, const FrameState& fs,
                     const DeoptReason& r);

  GlobalCell* global_cell(const std::string& name);
  void set_global(const std::string& name, Value v);
  const Value* get_global(const std::string& name) const;

  FunctionState& state(const BytecodeFunction* fn) { return states_[fn]; }

  // True with probability cfg.force_fail_p (seeded).
  bool force_fail() {
    if (cfg.force_fail_p <= 0) return false;
    return unit_(rng) < cfg.force_fail_p;
  }

  bool tracing(unsigned bit) const { return (cfg.trace & bit) != 0; }
  std::ostream& tout() { return *cfg.trace_out; }
  std::ostream& out() { return *cfg.out; }

  std::string stats_json() const;

  // Whether a continuation's GlobalStable dependencies still hold; retires
  // it permanently otherwise.
  bool deps_valid(Continuation& c);

  // Test hook: invoked at every Checkpoint execution with (function,
  // resume bytecode pc); returning true forces an exit there.
  std::function<bool(const BytecodeFunction*, int)> checkpoint_hook;

  VmConfig cfg;
  VmStats stats;
  std::mt19937_64 rng;
  int call_depth = 0;

  // Set while executing a deoptless continuation in the current activation;
  // saved/restored around calls by the executor.
  bool in_deoptless = false;

 private:
  Value tier_dispatch(const BytecodeFunction* fn, std::vector<Value>& args);
  void compile_full(const BytecodeFunction* fn);
  Value deoptless_path(Continuation* origin, const FrameState& fs,
                       const DeoptReason& r, bool& handled);
  // Discarded compiled code is parked, not destroyed: an activation of it
  // may still be live on the C++ stack.
  void retire(std::unique_ptr<Continuation> c);

  std::unordered_map<std::string, std::unique_ptr<GlobalCell>> globals_;
  std::unordered_map<const BytecodeFunction*, FunctionState> states_;
  std::vector<std::unique_ptr<Continuation>> graveyard_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

// Baseline interpreter (interp.cpp). `locals` may be pre-seeded; executes
// from `pc` with the given operand stack until Return. Frames resumed after
// a deoptimization run with `allow_osr` false: the activation finishes in
// the baseline tier and recompilation waits for the next invocation.
Value interp_execute(Vm& vm, const BytecodeFunction* fn, int pc,
                     std::vector<Value> stack,
                     std::vector<std::optional<Value>> locals,
                     bool allow_osr = true);

// Optimized-tier executor (optexec.cpp).
Value optexec_execute(Vm& vm, Continuation& cont, std::vector<Value> stack,
                      std::vector<std::optional<Value>> locals);

// Feedback cleanup-and-inference after a failed guard (deopt.cpp).
void feedback_repair(Vm& vm, const DeoptContext& ctx, const FrameState& fs);

// Dispatch over a sorted table: first entry whose context is implied by ctx,
// skipping retired or dependency-invalid entries.
Continuation* dispatch(Vm& vm, ContinuationTable& table,
                       const DeoptContext& ctx);

bool recompile_heuristic(const ContinuationTable& table, int bound,
                         const Continuation& matched, const DeoptContext& ctx);

}  // namespace dl
