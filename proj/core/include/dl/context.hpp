#pragma once

#include <string>
#include <vector>

#include "dl/frame.hpp"
#include "dl/value.hpp"

namespace dl {

// Dispatch key for deoptless continuations: where the deopt happened, why,
// and the concrete types of the live state.
struct DeoptContext {
  int pc = 0;
  DeoptReasonKind reason_kind = DeoptReasonKind::TypeGuardFail;
  int reason_site = -1;
  TypeTag reason_actual = TypeTag::Any;          // TypeGuardFail only
  const BytecodeFunction* reason_callee = nullptr;  // CallTargetFail only
  std::vector<TypeTag> stack;                     // bottom-to-top
  std::vector<std::pair<std::string, TypeTag>> env;  // local-table order

  int stack_size() const { return (int)stack.size(); }
  int env_size() const { return (int)env.size(); }
};

// True iff a continuation compiled for `b` may be invoked from a live state
// described by `a` (a implies b).
bool ctx_leq(const DeoptContext& a, const DeoptContext& b);

// Number of typed slots below Any plus the lattice-depth sum; higher is more
// specialized. Used as the primary linearization key of dispatch tables.
int ctx_specificity(const DeoptContext& c);

// Stable 64-bit FNV-1a digest over the serialized context, hex-encoded for
// trace lines.
std::string ctx_digest(const DeoptContext& c);

DeoptContext compute_ctx(const FrameState& fs, const DeoptReason& r);

}  // namespace dl
