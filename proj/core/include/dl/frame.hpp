#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dl/value.hpp"

namespace dl {

struct BytecodeFunction;

enum class DeoptReasonKind : uint8_t {
  TypeGuardFail,
  CallTargetFail,
  BranchPruneFail,
  GlobalInvalidated,
  EnvLeaked,
  ForcedTest,  // never constructed directly; see `forced` flag
};

const char* deopt_reason_name(DeoptReasonKind k);

struct DeoptReason {
  DeoptReasonKind kind = DeoptReasonKind::TypeGuardFail;
  int site_pc = -1;  // bytecode pc of the speculation site
  TypeTag expected = TypeTag::Any;
  TypeTag actual = TypeTag::Any;  // type_of of the offending value
  const BytecodeFunction* expected_callee = nullptr;
  const BytecodeFunction* actual_callee = nullptr;
  std::string global_name;
  // A forced failure leaves the guarded fact true: feedback is not repaired
  // and code is not retired.
  bool forced = false;
  int line = 0;  // source span of the originating guard

  DeoptReasonKind effective_kind() const {
    return forced ? DeoptReasonKind::ForcedTest : kind;
  }
};

// Baseline-tier execution state captured at a checkpoint; sufficient for the
// interpreter to resume. Locals are ordered by the function's local table;
// nullopt marks a missing (never-assigned or dead-pruned) local.
struct FrameState {
  const BytecodeFunction* fn = nullptr;
  int pc = 0;
  std::vector<Value> stack;                 // bottom-to-top
  std::vector<std::optional<Value>> locals;  // indexed by local table
  // Chained caller state for inlined frames; always absent in v1.
  std::shared_ptr<FrameState> next;
};

}  // namespace dl
