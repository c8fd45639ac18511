#include "dl/bytecode.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace dl {

const char* opcode_name(Opcode op) {
  switch (op) {
    case Opcode::LoadConst: return "LoadConst";
    case Opcode::LoadLocal: return "LoadLocal";
    case Opcode::StoreLocal: return "StoreLocal";
    case Opcode::LoadGlobal: return "LoadGlobal";
    case Opcode::StoreGlobal: return "StoreGlobal";
    case Opcode::Call: return "Call";
    case Opcode::BinOp: return "BinOp";
    case Opcode::IndexGet: return "IndexGet";
    case Opcode::IndexSet: return "IndexSet";
    case Opcode::IndexSetV: return "IndexSetV";
    case Opcode::MakeVec: return "MakeVec";
    case Opcode::Length: return "Length";
    case Opcode::Print: return "Print";
    case Opcode::Pop: return "Pop";
    case Opcode::Branch: return "Branch";
    case Opcode::BranchIfFalse: return "BranchIfFalse";
    case Opcode::ForSeqInit: return "ForSeqInit";
    case Opcode::ForSeqNext: return "ForSeqNext";
    case Opcode::Return: return "Return";
  }
  return "?";
}

int BytecodeFunction::local_index(const std::string& n) const {
  auto it = std::find(locals.begin(), locals.end(), n);
  return it == locals.end() ? -1 : (int)(it - locals.begin());
}

BytecodeFunction* LoweredProgram::find(const std::string& name) const {
  for (const auto& f : fns)
    if (f->name == name) return f.get();
  return nullptr;
}

namespace {

// Stack effect of the fall-through edge.
int stack_effect(const Instr& in) {
  switch (in.op) {
    case Opcode::LoadConst:
    case Opcode::LoadLocal:
    case Opcode::LoadGlobal:
      return 1;
    case Opcode::StoreLocal:
    case Opcode::StoreGlobal:
    case Opcode::BinOp:
    case Opcode::IndexGet:
    case Opcode::Pop:
    case Opcode::BranchIfFalse:
    case Opcode::ForSeqInit:
    case Opcode::Return:
      return -1;
    case Opcode::IndexSet:
    case Opcode::IndexSetV:
      return -2;
    case Opcode::Call:
      return -in.a;  // pops callee + a args, pushes result
    case Opcode::MakeVec:
      return 1 - in.a;
    case Opcode::Length:
    case Opcode::Print:
    case Opcode::Branch:
    case Opcode::ForSeqNext:
      return 0;
  }
  return 0;
}

struct Succ {
  int pc;
  int depth_delta;
};

// Successors with their stack-depth delta relative to the instruction entry.
void successors(const BytecodeFunction& f, int pc,
                std::vector<Succ>& out) {
  const Instr& in = f.code[(size_t)pc];
  out.clear();
  switch (in.op) {
    case Opcode::Return:
      break;
    case Opcode::Branch:
      out.push_back({pc + 1 + in.a, 0});
      break;
    case Opcode::BranchIfFalse:
      out.push_back({pc + 1, -1});
      out.push_back({pc + 1 + in.a, -1});
      break;
    case Opcode::ForSeqNext:
      out.push_back({pc + 1, 0});
      out.push_back({pc + 1 + in.b, -1});
      break;
    default:
      out.push_back({pc + 1, stack_effect(in)});
      break;
  }
}

}  // namespace

std::vector<int> stack_depths(const BytecodeFunction& f) {
  const int n = (int)f.code.size();
  std::vector<int> depth((size_t)n, -1);
  if (n == 0) return depth;
  std::deque<int> work{0};
  depth[0] = 0;
  std::vector<Succ> succ;
  while (!work.empty()) {
    int pc = work.front();
    work.pop_front();
    successors(f, pc, succ);
    for (const Succ& s : succ) {
      if (s.pc < 0 || s.pc > n)
        throw LowerError("branch target out of bounds in " + f.name);
      int d = depth[(size_t)pc] + s.depth_delta;
      if (d < 0) throw LowerError("stack underflow in " + f.name);
      if (s.pc == n) {
        // Falling off the end is invalid bytecode; lowering always emits a
        // trailing Return.
        throw LowerError("control falls off the end of " + f.name);
      }
      if (depth[(size_t)s.pc] == -1) {
        depth[(size_t)s.pc] = d;
        work.push_back(s.pc);
      } else if (depth[(size_t)s.pc] != d) {
        throw LowerError("stack depth mismatch at pc " + std::to_string(s.pc) +
                         " in " + f.name);
      }
    }
  }
  return depth;
}

int max_stack_depth(const BytecodeFunction& f) {
  // Every push is visible as the entry depth of the following pc, so the
  // deepest entry depth is the deepest the stack ever gets.
  int maxd = 0;
  for (int d : stack_depths(f)) maxd = std::max(maxd, d);
  return maxd;
}

std::vector<std::vector<bool>> live_locals(const BytecodeFunction& f) {
  const int n = (int)f.code.size();
  const int nl = f.nlocals();
  std::vector<std::vector<bool>> live((size_t)n,
                                      std::vector<bool>((size_t)nl, false));
  bool changed = true;
  std::vector<Succ> succ;
  while (changed) {
    changed = false;
    for (int pc = n - 1; pc >= 0; pc--) {
      const Instr& in = f.code[(size_t)pc];
      std::vector<bool> out((size_t)nl, false);
      successors(f, pc, succ);
      for (const Succ& s : succ) {
        if (s.pc >= n) continue;
        for (int l = 0; l < nl; l++)
          if (live[(size_t)s.pc][(size_t)l]) out[(size_t)l] = true;
      }
      // Kill definitions, add uses.
      switch (in.op) {
        case Opcode::StoreLocal:
        case Opcode::ForSeqInit:
          out[(size_t)in.a] = false;
          break;
        case Opcode::LoadLocal:
        case Opcode::ForSeqNext:
        case Opcode::IndexSet:
          out[(size_t)in.a] = true;
          break;
        default:
          break;
      }
      if (out != live[(size_t)pc]) {
        live[(size_t)pc] = std::move(out);
        changed = true;
      }
    }
  }
  return live;
}

std::string disassemble(const BytecodeFunction& f) {
  std::ostringstream ss;
  for (size_t pc = 0; pc < f.code.size(); pc++) {
    const Instr& in = f.code[pc];
    ss << pc << ": " << opcode_name(in.op);
    switch (in.op) {
      case Opcode::LoadConst:
        ss << " " << f.consts[(size_t)in.a].render();
        break;
      case Opcode::LoadLocal:
      case Opcode::StoreLocal:
      case Opcode::IndexSet:
        ss << " " << f.locals[(size_t)in.a];
        break;
      case Opcode::LoadGlobal:
      case Opcode::StoreGlobal:
        ss << " " << f.global_names[(size_t)in.a];
        break;
      case Opcode::Call:
      case Opcode::MakeVec:
        ss << " " << in.a;
        break;
      case Opcode::BinOp:
        ss << " " << binop_name((BinOp)in.a);
        break;
      case Opcode::Branch:
      case Opcode::BranchIfFalse:
        ss << " " << in.a << " (-> " << (int)pc + 1 + in.a << ")";
        break;
      case Opcode::ForSeqInit:
        ss << " " << f.locals[(size_t)in.a];
        break;
      case Opcode::ForSeqNext:
        ss << " " << f.locals[(size_t)in.a] << " exit " << in.b << " (-> "
           << (int)pc + 1 + in.b << ")";
        break;
      default:
        break;
    }
    ss << "\n";
  }
  return ss.str();
}

}  // namespace dl
