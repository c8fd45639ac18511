#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dl/bytecode.hpp"
#include "dl/context.hpp"
#include "dl/feedback.hpp"
#include "dl/frame.hpp"

namespace dl {

class Vm;
struct GlobalCell;

// Register opcodes for the optimized tier. Registers are slot-aligned with
// the bytecode model: slot s of a frame has a register s in each of the four
// files (i64, f64, num, val); the static type decides which file holds the
// live representation at a given pc.
//
// Operand convention: a is the destination unless noted; "guard" operands
// name a GuardInfo index, which carries the exit descriptor and the deopt
// reason for that check.
enum class ROp : uint8_t {
  // constants and globals
  LdCI,  // i64[a] = iconsts[b]
  LdCF,  // f64[a] = fconsts[b]
  LdCV,  // val[a] = vconsts[b]
  LdG,   // val[a] = *cells[b]; guard c fires if the global is unbound

  // moves and representation widenings (never fail)
  MovI, MovF, MovN, MovV,  // x[a] = x[b]
  ItoF,  // f64[a] = (double)i64[b]
  ItoN, FtoN,              // num[a] = tagged i64[b] / f64[b]
  ItoV, FtoV, BtoV, NtoV,  // val[a] = boxed scalar of x[b]
  NtoFc,                   // f64[a] = numeric value of num[b] (convert)

  // guarded representation narrowings
  GVtoI,   // i64[a] = int scalar in val[b], else guard c
  GVtoF,   // f64[a] = float scalar in val[b], else guard c
  GVtoB,   // i64[a] = bool scalar in val[b], else guard c
  GVtoN,   // num[a] = numeric scalar in val[b], else guard c
  GNtoI,   // i64[a] = num[b] if it holds an int, else guard c
  GNtoF,   // f64[a] = num[b] if it holds a float, else guard c
  FtoIt,   // i64[a] = trunc(f64[b]), guard c on out-of-range
  NtoIt,   // i64[a] = trunc(num[b])
  GVtoIdx, // i64[a] = truncated numeric scalar in val[b], else guard c

  // guards
  GuardT,     // type of val[a] <: guards[b].expected, else exit
  GuardFn,    // val[a] is the closure vconsts[c], else guard b
  GuardTrue,  // i64[a] != 0, else guard b (pruned branch)
  GuardFalse, // i64[a] == 0, else guard b
  DeoptNow,   // unconditional exit via guard a
  Checkpoint, // no-op anchor for exit a; honors forced-exit requests

  // typed arithmetic and comparisons (comparisons produce 0/1 in i64)
  AddI, SubI, MulI, EqI, LtI, LeI,
  AddF, SubF, MulF, DivF, EqF, LtF, LeF,
  AddN, SubN, MulN,        // num[a] = num[b] op num[c]
  DivN,                    // f64[a] = num[b] / num[c]
  EqN, LtN, LeN,           // i64[a] = num[b] cmp num[c]

  // generic fallbacks: full binop semantics, errors exit via guard d
  AddV, SubV, MulV, DivV, EqV, LtV, LeV,  // val[a] = val[b] op val[c]

  // indexing; index operand is a 1-based i64, bounds failures exit via d
  IdxGetI,  // i64[a] = intvec val[b] [[ i64[c] ]]
  IdxGetF,  // f64[a] = floatvec val[b] [[ i64[c] ]]
  IdxGetB,  // i64[a] = boolvec val[b] [[ i64[c] ]]
  IdxGetG,  // val[a] = genvec val[b] [[ i64[c] ]]
  IdxGetV,  // val[a] = generic val[b] [[ i64[c] ]] (boxed element)
  IdxSetI,  // val[a][[ i64[b] ]] = i64[c]   (IntVec, in place if unique)
  IdxSetF,  // val[a][[ i64[b] ]] = f64[c]   (FloatVec)
  IdxSetB,  // val[a][[ i64[b] ]] = i64[c]   (BoolVec)
  IdxSetG,  // val[a][[ i64[b] ]] = val[c]   (GenVec)
  IdxSetV,  // val[a] = index_set(val[a], i64[b], val[c]) generic

  LenV,    // i64[a] = length(val[b])
  MkVec,   // val[a] = concat(val[b] .. val[b+c-1])
  PrintV,  // print val[a]
  CallD,   // val[a] = call callees[b] with args val[c .. c+d-1]
  CallC,   // val[a] = call closure in val[a] with args val[b .. b+c-1]
  Jmp,     // goto a
  Jz,      // if i64[a] == 0 goto b
  ForNext, // if i64[a]+1 > i64[b] goto c else i64[a] += 1
  RetV,    // return val[a]
  Nop,
};

const char* rop_name(ROp op);

struct RInstr {
  ROp op;
  int32_t a = 0, b = 0, c = 0, d = 0;
};

enum class SlotCls : uint8_t { I64, F64, NUM, VAL, ConstV, Missing };

// Where a framestate slot's value lives in the register files (or constant
// pool) at a given exit.
struct SlotSrc {
  SlotCls cls = SlotCls::Missing;
  int32_t idx = 0;
  TypeTag type = TypeTag::Any;  // static type, for diagnostics
};

struct ExitDescr {
  int bc_pc = 0;
  std::vector<SlotSrc> stack;   // bottom-to-top
  std::vector<SlotSrc> locals;  // one per local-table entry
};

struct GuardInfo {
  DeoptReasonKind kind = DeoptReasonKind::TypeGuardFail;
  int site_pc = -1;
  TypeTag expected = TypeTag::Any;
  int expected_callee = -1;  // vconsts index of the expected closure
  int exit = 0;              // ExitDescr index
  int offending = -1;        // register slot of the offending value
  SlotCls offending_cls = SlotCls::VAL;
  int line = 0;
};

struct EntrySlot {
  int32_t reg = 0;
  SlotCls cls = SlotCls::Missing;
  TypeTag tag = TypeTag::Any;
};

struct EntryDescr {
  int entry_pc = 0;
  std::vector<EntrySlot> stack;
  std::vector<EntrySlot> locals;  // one per local-table entry
};

struct IRFunction {
  const BytecodeFunction* src = nullptr;
  EntryDescr entry;
  std::vector<RInstr> code;
  std::vector<ExitDescr> exits;
  std::vector<GuardInfo> guards;
  std::vector<int64_t> iconsts;
  std::vector<double> fconsts;
  std::vector<Value> vconsts;
  std::vector<GlobalCell*> cells;
  std::vector<const BytecodeFunction*> callees;
  int n_regs = 0;  // all four files have this many registers
  // GlobalStable dependencies: name and the version assumed at compile time.
  std::vector<std::pair<std::string, uint64_t>> deps;
};

struct Continuation {
  IRFunction prog;
  std::optional<DeoptContext> compiled_for;  // absent for entry/OSR-in code
  uint64_t use_count = 0;
  uint64_t created_ns = 0;
  uint64_t exec_count = 0;
  bool retired = false;
};

// Per-slot knowledge about a local at a pc: definitely unset, definitely set
// (with a static type), or set on only some paths.
enum class LocalState : uint8_t { Missing, Present, Maybe };

struct TranslateRequest {
  const BytecodeFunction* fn = nullptr;
  int entry_pc = 0;
  std::vector<TypeTag> seed_stack;
  // Entry locals: Missing slots are not received; Present slots carry an
  // assumed type. Trusted entries (deoptless) take the types on faith with
  // no entry guards.
  std::vector<std::optional<TypeTag>> seed_locals;
  bool trusted = false;
  // OSR-in continuations received their locals from a live interpreter
  // frame; relevant for the dead-store restriction.
  bool received_env = false;
};

IRFunction translate(Vm& vm, const TranslateRequest& req,
                     const FeedbackStore& feedback);

struct OptimizeOptions {
  bool unsafe_dse = false;  // test-only: ignore framestate uses of
                            // received-from-outside locals
};

void optimize(IRFunction& ir, const OptimizeOptions& opts = {});

// Structural checks over checkpoints/guards; returns human-readable
// violations, empty when ok.
std::vector<std::string> verify_checkpoints(const IRFunction& ir);

// Finalizes the IR (compacts Nops, remaps jumps) into an executable object.
std::unique_ptr<Continuation> emit(IRFunction ir);

std::string dump_ir(const IRFunction& ir);

}  // namespace dl
