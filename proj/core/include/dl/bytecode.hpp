#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dl/value.hpp"

namespace dl {

struct Program;  // ast.hpp

// Stack bytecode for the baseline tier. Branch offsets are relative to the
// instruction following the branch; a negative Branch offset marks a loop
// back-edge.
enum class Opcode : uint8_t {
  LoadConst,      // a: constant pool index
  LoadLocal,      // a: local index
  StoreLocal,     // a: local index
  LoadGlobal,     // a: global-name index
  StoreGlobal,    // a: global-name index (top level only)
  Call,           // a: argument count; stack [callee, arg1..argN] -> [result]
  BinOp,          // a: dl::BinOp;      stack [lhs, rhs] -> [result]
  IndexGet,       // stack [vec, idx] -> [element]
  IndexSet,       // a: local index;    stack [idx, val] -> []; updates local
  IndexSetV,      // stack [vec, idx, val] -> [vec']; top level only
  MakeVec,        // a: part count; concat semantics of c(...)
  Length,         // stack [vec] -> [IntScalar length]
  Print,          // prints top of stack, leaves it in place
  Pop,            // discard top of stack
  Branch,         // a: offset
  BranchIfFalse,  // a: offset; stack [BoolScalar] -> []
  ForSeqInit,     // a: loop local; stack [lo, hi] -> [hi]; requires integer
                  // scalar endpoints and seeds the loop local with lo-1
  ForSeqNext,     // a: loop local, b: exit offset; stack [hi] -> [hi] and
                  // increments the local, or pops hi and jumps on exit
  Return,         // stack [result] -> (caller)
};

const char* opcode_name(Opcode op);

struct Instr {
  Opcode op;
  int32_t a = 0;
  int32_t b = 0;
  int32_t line = 0;
};

struct BytecodeFunction {
  std::string name;
  // Locals are assigned variables in first-assignment order followed by
  // parameters in declaration order.
  std::vector<std::string> locals;
  std::vector<int32_t> param_locals;  // local index of each parameter
  std::vector<Value> consts;
  std::vector<std::string> global_names;
  std::vector<Instr> code;
  int32_t id = 0;

  int nparams() const { return (int)param_locals.size(); }
  int nlocals() const { return (int)locals.size(); }
  int local_index(const std::string& name) const;  // -1 if absent
};

struct LoweredProgram {
  std::vector<std::unique_ptr<BytecodeFunction>> fns;
  BytecodeFunction* main = nullptr;  // "<main>"; runs the top level

  BytecodeFunction* find(const std::string& name) const;
};

LoweredProgram lower(const Program& ast);
std::string disassemble(const BytecodeFunction& f);

// Operand-stack depth at the entry of each pc, by abstract interpretation
// from entry. Throws LowerError if any pc is reachable at two different
// depths or a branch target is out of bounds.
std::vector<int> stack_depths(const BytecodeFunction& f);
int max_stack_depth(const BytecodeFunction& f);

// Per-pc live-in local variable sets (backward dataflow). live[pc][l] is true
// if local l may be read before being overwritten on some path from pc.
std::vector<std::vector<bool>> live_locals(const BytecodeFunction& f);

}  // namespace dl
