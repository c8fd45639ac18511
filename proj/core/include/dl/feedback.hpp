#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "dl/value.hpp"

namespace dl {

struct BytecodeFunction;

// Run-time profile data for one function, keyed by bytecode pc. Merged tags
// only widen (lub) over time, until a repair event explicitly rewrites or
// invalidates records.
struct TypeRecord {
  TypeTag tag = TypeTag::Any;
  bool seen = false;
  bool stale = false;

  void record(TypeTag t) {
    tag = seen ? lub(tag, t) : t;
    seen = true;
    stale = false;
  }
  bool monomorphic() const { return seen && !stale; }
};

struct BranchRecord {
  uint64_t taken = 0;      // branch-if-false jumped
  uint64_t not_taken = 0;  // fell through
  uint64_t total() const { return taken + not_taken; }
};

struct CallRecord {
  static constexpr int kMaxTargets = 3;
  std::vector<const BytecodeFunction*> targets;  // ≤ kMaxTargets
  bool megamorphic = false;

  void record(const BytecodeFunction* fn) {
    if (megamorphic) return;
    for (auto* t : targets)
      if (t == fn) return;
    if ((int)targets.size() == kMaxTargets) {
      megamorphic = true;
      targets.clear();
    } else {
      targets.push_back(fn);
    }
  }
  const BytecodeFunction* monomorphic_target() const {
    return !megamorphic && targets.size() == 1 ? targets[0] : nullptr;
  }
};

struct FeedbackStore {
  std::unordered_map<int, TypeRecord> types;      // typed value sites
  std::unordered_map<int, BranchRecord> branches;  // BranchIfFalse sites
  std::unordered_map<int, CallRecord> calls;       // Call sites

  void record_type(int pc, TypeTag t) { types[pc].record(t); }
  void record_branch(int pc, bool jumped) {
    auto& b = branches[pc];
    (jumped ? b.taken : b.not_taken)++;
  }
  void record_call(int pc, const BytecodeFunction* fn) {
    calls[pc].record(fn);
  }

  const TypeRecord* type_at(int pc) const {
    auto it = types.find(pc);
    return it == types.end() ? nullptr : &it->second;
  }
  const BranchRecord* branch_at(int pc) const {
    auto it = branches.find(pc);
    return it == branches.end() ? nullptr : &it->second;
  }
  const CallRecord* call_at(int pc) const {
    auto it = calls.find(pc);
    return it == calls.end() ? nullptr : &it->second;
  }
};

}  // namespace dl
