#include <algorithm>
#include <map>
#include <sstream>
#include <vector>

#include "dl/ir.hpp"
#include "dl/value.hpp"

namespace dl {

namespace {

// File index for liveness bitsets.
enum File { FI = 0, FF = 1, FN = 2, FV = 3 };

struct RegRef {
  int reg;
  File file;
};

// Per-instruction register effects.
struct Effects {
  std::vector<RegRef> reads;
  std::vector<RegRef> writes;
  int guard = -1;       // GuardInfo operand, -1 if none
  int exit = -1;        // direct ExitDescr operand (Checkpoint)
  bool pure = true;     // no side effect, no exit; removable when dead
  bool terminal = false;
  std::vector<int> jumps;  // explicit jump targets (code indices)
  bool falls = true;
};

Effects effects_of(const RInstr& in) {
  Effects e;
  auto r = [&](int reg, File f) { e.reads.push_back({reg, f}); };
  auto w = [&](int reg, File f) { e.writes.push_back({reg, f}); };
  switch (in.op) {
    case ROp::LdCI: w(in.a, FI); break;
    case ROp::LdCF: w(in.a, FF); break;
    case ROp::LdCV: w(in.a, FV); break;
    case ROp::LdG: w(in.a, FV); e.guard = in.c; e.pure = false; break;
    case ROp::MovI: w(in.a, FI); r(in.b, FI); break;
    case ROp::MovF: w(in.a, FF); r(in.b, FF); break;
    case ROp::MovN: w(in.a, FN); r(in.b, FN); break;
    case ROp::MovV: w(in.a, FV); r(in.b, FV); break;
    case ROp::ItoF: w(in.a, FF); r(in.b, FI); break;
    case ROp::ItoN: w(in.a, FN); r(in.b, FI); break;
    case ROp::FtoN: w(in.a, FN); r(in.b, FF); break;
    case ROp::ItoV: case ROp::BtoV: w(in.a, FV); r(in.b, FI); break;
    case ROp::FtoV: w(in.a, FV); r(in.b, FF); break;
    case ROp::NtoV: w(in.a, FV); r(in.b, FN); break;
    case ROp::NtoFc: w(in.a, FF); r(in.b, FN); break;
    case ROp::GVtoI: w(in.a, FI); r(in.b, FV); e.guard = in.c; e.pure = false; break;
    case ROp::GVtoF: w(in.a, FF); r(in.b, FV); e.guard = in.c; e.pure = false; break;
    case ROp::GVtoB: w(in.a, FI); r(in.b, FV); e.guard = in.c; e.pure = false; break;
    case ROp::GVtoN: w(in.a, FN); r(in.b, FV); e.guard = in.c; e.pure = false; break;
    case ROp::GNtoI: w(in.a, FI); r(in.b, FN); e.guard = in.c; e.pure = false; break;
    case ROp::GNtoF: w(in.a, FF); r(in.b, FN); e.guard = in.c; e.pure = false; break;
    case ROp::FtoIt: w(in.a, FI); r(in.b, FF); e.guard = in.c; e.pure = false; break;
    case ROp::NtoIt: w(in.a, FI); r(in.b, FN); e.guard = in.c; e.pure = false; break;
    case ROp::GVtoIdx: w(in.a, FI); r(in.b, FV); e.guard = in.c; e.pure = false; break;
    case ROp::GuardT: r(in.a, FV); e.guard = in.b; e.pure = false; break;
    case ROp::GuardFn: r(in.a, FV); e.guard = in.b; e.pure = false; break;
    case ROp::GuardTrue: case ROp::GuardFalse:
      r(in.a, FI); e.guard = in.b; e.pure = false; break;
    case ROp::DeoptNow:
      e.guard = in.a; e.pure = false; e.terminal = true; e.falls = false;
      break;
    case ROp::Checkpoint: e.exit = in.a; e.pure = false; break;
    case ROp::AddI: case ROp::SubI: case ROp::MulI:
    case ROp::EqI: case ROp::LtI: case ROp::LeI:
      w(in.a, FI); r(in.b, FI); r(in.c, FI); break;
    case ROp::AddF: case ROp::SubF: case ROp::MulF: case ROp::DivF:
      w(in.a, FF); r(in.b, FF); r(in.c, FF); break;
    case ROp::EqF: case ROp::LtF: case ROp::LeF:
      w(in.a, FI); r(in.b, FF); r(in.c, FF); break;
    case ROp::AddN: case ROp::SubN: case ROp::MulN:
      w(in.a, FN); r(in.b, FN); r(in.c, FN); break;
    case ROp::DivN: w(in.a, FF); r(in.b, FN); r(in.c, FN); break;
    case ROp::EqN: case ROp::LtN: case ROp::LeN:
      w(in.a, FI); r(in.b, FN); r(in.c, FN); break;
    case ROp::AddV: case ROp::SubV: case ROp::MulV: case ROp::DivV:
    case ROp::EqV: case ROp::LtV: case ROp::LeV:
      w(in.a, FV); r(in.b, FV); r(in.c, FV);
      e.guard = in.d; e.pure = false;
      break;
    case ROp::IdxGetI: w(in.a, FI); r(in.b, FV); r(in.c, FI); e.guard = in.d; e.pure = false; break;
    case ROp::IdxGetF: w(in.a, FF); r(in.b, FV); r(in.c, FI); e.guard = in.d; e.pure = false; break;
    case ROp::IdxGetB: w(in.a, FI); r(in.b, FV); r(in.c, FI); e.guard = in.d; e.pure = false; break;
    case ROp::IdxGetG: case ROp::IdxGetV:
      w(in.a, FV); r(in.b, FV); r(in.c, FI); e.guard = in.d; e.pure = false;
      break;
    case ROp::IdxSetI: case ROp::IdxSetB:
      r(in.a, FV); w(in.a, FV); r(in.b, FI); r(in.c, FI);
      e.guard = in.d; e.pure = false;
      break;
    case ROp::IdxSetF:
      r(in.a, FV); w(in.a, FV); r(in.b, FI); r(in.c, FF);
      e.guard = in.d; e.pure = false;
      break;
    case ROp::IdxSetG: case ROp::IdxSetV:
      r(in.a, FV); w(in.a, FV); r(in.b, FI); r(in.c, FV);
      e.guard = in.d; e.pure = false;
      break;
    case ROp::LenV: w(in.a, FI); r(in.b, FV); break;
    case ROp::MkVec:
      w(in.a, FV);
      for (int i = 0; i < in.c; i++) r(in.b + i, FV);
      break;
    case ROp::PrintV: r(in.a, FV); e.pure = false; break;
    case ROp::CallD:
      w(in.a, FV);
      for (int i = 0; i < in.d; i++) r(in.c + i, FV);
      e.pure = false;
      break;
    case ROp::CallC:
      r(in.a, FV); w(in.a, FV);
      for (int i = 0; i < in.c; i++) r(in.b + i, FV);
      e.pure = false;
      break;
    case ROp::Jmp:
      e.pure = false; e.falls = false; e.jumps.push_back(in.a);
      break;
    case ROp::Jz:
      r(in.a, FI); e.pure = false; e.jumps.push_back(in.b);
      break;
    case ROp::ForNext:
      r(in.a, FI); w(in.a, FI); r(in.b, FI);
      e.pure = false; e.jumps.push_back(in.c);
      break;
    case ROp::RetV:
      r(in.a, FV); e.pure = false; e.terminal = true; e.falls = false;
      break;
    case ROp::Nop: break;
  }
  return e;
}

int bit_of(int reg, File f) { return reg * 4 + (int)f; }

// Registers an exit descriptor reads when taken. With unsafe_dse, slots
// backing entry-received locals are skipped — this is the deliberately
// unsound mode used to demonstrate why framestate uses must count.
void exit_uses(const IRFunction& ir, int exit_idx, bool unsafe_dse,
               std::vector<bool>& live) {
  const ExitDescr& e = ir.exits[(size_t)exit_idx];
  auto add = [&](const SlotSrc& s, bool is_local, size_t slot) {
    if (s.cls == SlotCls::Missing || s.cls == SlotCls::ConstV) return;
    if (unsafe_dse && is_local && slot < ir.entry.locals.size() &&
        ir.entry.locals[slot].cls != SlotCls::Missing)
      return;
    File f = s.cls == SlotCls::I64   ? FI
             : s.cls == SlotCls::F64 ? FF
             : s.cls == SlotCls::NUM ? FN
                                     : FV;
    live[(size_t)bit_of(s.idx, f)] = true;
  };
  for (const SlotSrc& s : e.stack) add(s, false, 0);
  for (size_t l = 0; l < e.locals.size(); l++) add(e.locals[l], true, l);
}

struct Cfg {
  std::vector<Effects> fx;
  std::vector<std::vector<int>> succs;
  std::vector<bool> block_start;
};

Cfg build_cfg(const IRFunction& ir) {
  Cfg g;
  size_t n = ir.code.size();
  g.fx.reserve(n);
  g.succs.resize(n);
  g.block_start.assign(n + 1, false);
  if (n) g.block_start[0] = true;
  for (size_t i = 0; i < n; i++) {
    Effects e = effects_of(ir.code[i]);
    if (e.falls && i + 1 < n) g.succs[i].push_back((int)i + 1);
    for (int t : e.jumps) {
      g.succs[i].push_back(t);
      g.block_start[(size_t)t] = true;
      if (i + 1 <= n) g.block_start[i + 1] = true;
    }
    if (!e.falls && i + 1 <= n) g.block_start[i + 1] = true;
    g.fx.push_back(std::move(e));
  }
  return g;
}

// ---- constant folding ---------------------------------------------------

int add_iconst(IRFunction& ir, int64_t v) {
  for (size_t i = 0; i < ir.iconsts.size(); i++)
    if (ir.iconsts[i] == v) return (int)i;
  ir.iconsts.push_back(v);
  return (int)ir.iconsts.size() - 1;
}

bool fold_constants(IRFunction& ir, const Cfg& g) {
  bool changed = false;
  std::map<int, int64_t> known;  // i64 reg -> value, block-local
  for (size_t i = 0; i < ir.code.size(); i++) {
    if (g.block_start[i]) known.clear();
    RInstr& in = ir.code[i];
    auto get = [&](int reg) -> const int64_t* {
      auto it = known.find(reg);
      return it == known.end() ? nullptr : &it->second;
    };
    auto kill = [&](int reg) { known.erase(reg); };
    switch (in.op) {
      case ROp::LdCI:
        known[in.a] = ir.iconsts[(size_t)in.b];
        continue;
      case ROp::MovI:
        if (const int64_t* v = get(in.b)) {
          in = {ROp::LdCI, in.a, add_iconst(ir, *v), 0, 0};
          known[in.a] = *v;
          changed = true;
        } else {
          kill(in.a);
        }
        continue;
      case ROp::AddI: case ROp::SubI: case ROp::MulI:
      case ROp::EqI: case ROp::LtI: case ROp::LeI: {
        const int64_t* x = get(in.b);
        const int64_t* y = get(in.c);
        if (x && y) {
          int64_t v = 0;
          switch (in.op) {
            case ROp::AddI: v = wrap_add(*x, *y); break;
            case ROp::SubI: v = wrap_sub(*x, *y); break;
            case ROp::MulI: v = wrap_mul(*x, *y); break;
            case ROp::EqI: v = *x == *y; break;
            case ROp::LtI: v = *x < *y; break;
            default: v = *x <= *y; break;
          }
          in = {ROp::LdCI, in.a, add_iconst(ir, v), 0, 0};
          known[in.a] = v;
          changed = true;
        } else {
          kill(in.a);
        }
        continue;
      }
      default:
        break;
    }
    for (const RegRef& w : g.fx[i].writes)
      if (w.file == FI) kill(w.reg);
  }
  return changed;
}

// ---- redundant guard elision -------------------------------------------

bool is_type_guard(ROp op) {
  switch (op) {
    case ROp::GVtoI: case ROp::GVtoF: case ROp::GVtoB: case ROp::GVtoN:
    case ROp::GNtoI: case ROp::GNtoF: case ROp::GuardT:
      return true;
    default:
      return false;
  }
}

// Within a block, a pure GuardT re-checking a register already known to
// satisfy the same (or a stronger) expectation is removed. Narrowing guards
// (GVtoI etc.) also produce a value and are left alone.
bool elide_guards(IRFunction& ir, const Cfg& g) {
  bool changed = false;
  std::map<int, TypeTag> facts;  // val register -> established upper bound
  for (size_t i = 0; i < ir.code.size(); i++) {
    if (g.block_start[i]) facts.clear();
    RInstr& in = ir.code[i];
    if (in.op == ROp::GuardT) {
      TypeTag expected = ir.guards[(size_t)in.b].expected;
      auto it = facts.find(in.a);
      if (it != facts.end() && subtype(it->second, expected)) {
        in = {ROp::Nop, 0, 0, 0, 0};
        changed = true;
        continue;
      }
      facts[in.a] = expected;
      continue;
    }
    // Scalar narrowing guards establish a fact about their source register.
    if (is_type_guard(in.op)) {
      TypeTag expected = ir.guards[(size_t)in.c].expected;
      auto it = facts.find(in.b);
      if (it == facts.end() || subtype(expected, it->second))
        facts[in.b] = expected;
    }
    // Any write to a val register invalidates facts keyed on it.
    for (const RegRef& w : g.fx[i].writes)
      if (w.file == FV) facts.erase(w.reg);
  }
  return changed;
}

// ---- dead store elimination --------------------------------------------

bool eliminate_dead_stores(IRFunction& ir, const Cfg& g, bool unsafe_dse) {
  size_t n = ir.code.size();
  size_t bits = (size_t)ir.n_regs * 4;
  std::vector<std::vector<bool>> live_out(n, std::vector<bool>(bits, false));
  bool changed_liveness = true;
  while (changed_liveness) {
    changed_liveness = false;
    for (size_t ii = n; ii-- > 0;) {
      std::vector<bool> out(bits, false);
      for (int s : g.succs[ii]) {
        // live-in of successor s
        std::vector<bool> in_s = live_out[(size_t)s];
        const Effects& ef = g.fx[(size_t)s];
        for (const RegRef& w : ef.writes)
          in_s[(size_t)bit_of(w.reg, w.file)] = false;
        for (const RegRef& r : ef.reads)
          in_s[(size_t)bit_of(r.reg, r.file)] = true;
        if (ef.guard >= 0)
          exit_uses(ir, ir.guards[(size_t)ef.guard].exit, unsafe_dse, in_s);
        if (ef.exit >= 0) exit_uses(ir, ef.exit, unsafe_dse, in_s);
        for (size_t b = 0; b < bits; b++)
          if (in_s[b]) out[b] = true;
      }
      // Terminal instructions keep their own guard/read uses via the forward
      // direction; nothing to add here.
      if (out != live_out[ii]) {
        live_out[ii] = std::move(out);
        changed_liveness = true;
      }
    }
  }
  bool changed = false;
  for (size_t i = 0; i < n; i++) {
    const Effects& ef = g.fx[i];
    if (!ef.pure || ef.writes.size() != 1 || ir.code[i].op == ROp::Nop)
      continue;
    const RegRef& w = ef.writes[0];
    if (!live_out[i][(size_t)bit_of(w.reg, w.file)]) {
      ir.code[i] = {ROp::Nop, 0, 0, 0, 0};
      changed = true;
    }
  }
  return changed;
}

}  // namespace

void optimize(IRFunction& ir, const OptimizeOptions& opts) {
  for (int round = 0; round < 4; round++) {
    Cfg g = build_cfg(ir);
    bool changed = false;
    changed |= fold_constants(ir, g);
    changed |= elide_guards(ir, g);
    // Folding may have rewritten instructions; recompute effects for DSE.
    Cfg g2 = build_cfg(ir);
    changed |= eliminate_dead_stores(ir, g2, opts.unsafe_dse);
    if (!changed) break;
  }
}

std::vector<std::string> verify_checkpoints(const IRFunction& ir) {
  std::vector<std::string> errs;
  auto err = [&](size_t i, const std::string& msg) {
    std::ostringstream os;
    os << "at " << i << " (" << (i < ir.code.size()
                                     ? rop_name(ir.code[i].op)
                                     : "end")
       << "): " << msg;
    errs.push_back(os.str());
  };
  if (ir.code.empty() || ir.code[0].op != ROp::Checkpoint) {
    errs.push_back("code does not begin with an entry checkpoint");
  }
  int nlocals = ir.src ? ir.src->nlocals() : (int)ir.entry.locals.size();
  std::vector<int> depths = ir.src ? stack_depths(*ir.src) : std::vector<int>();
  for (size_t e = 0; e < ir.exits.size(); e++) {
    const ExitDescr& x = ir.exits[e];
    if ((int)x.locals.size() != nlocals)
      err(e, "exit locals size mismatch");
    if (!depths.empty()) {
      if (x.bc_pc < 0 || x.bc_pc >= (int)depths.size() ||
          depths[(size_t)x.bc_pc] < 0)
        err(e, "exit resumes at an unreachable pc");
      else if ((int)x.stack.size() != depths[(size_t)x.bc_pc])
        err(e, "exit stack size does not match resume depth");
    }
    for (const SlotSrc& s : x.stack)
      if (s.cls != SlotCls::Missing && s.cls != SlotCls::ConstV &&
          (s.idx < 0 || s.idx >= ir.n_regs))
        err(e, "exit slot register out of range");
  }
  bool pending_effect = false;
  size_t effect_at = 0;
  for (size_t i = 0; i < ir.code.size(); i++) {
    Effects ef = effects_of(ir.code[i]);
    if (ef.guard >= 0) {
      if (ef.guard >= (int)ir.guards.size()) {
        err(i, "guard index out of range");
      } else if (ir.guards[(size_t)ef.guard].exit < 0 ||
                 ir.guards[(size_t)ef.guard].exit >= (int)ir.exits.size()) {
        err(i, "guard exit index out of range");
      }
    }
    if (ir.code[i].op == ROp::Checkpoint) {
      if (ir.code[i].a < 0 || ir.code[i].a >= (int)ir.exits.size())
        err(i, "checkpoint exit index out of range");
      pending_effect = false;
      continue;
    }
    // Effectful = observable side effect: stores into local registers,
    // indexed writes, calls, prints, loop-variable stepping. Representation
    // conversions of a local in place do not change its value and are not
    // effects.
    bool is_effect = false;
    switch (ir.code[i].op) {
      case ROp::IdxSetI: case ROp::IdxSetF: case ROp::IdxSetB:
      case ROp::IdxSetG: case ROp::IdxSetV:
      case ROp::CallD: case ROp::CallC:
      case ROp::PrintV: case ROp::ForNext:
        is_effect = true;
        break;
      case ROp::ItoF: case ROp::ItoN: case ROp::FtoN: case ROp::ItoV:
      case ROp::FtoV: case ROp::BtoV: case ROp::NtoV: case ROp::NtoFc:
        break;
      default:
        for (const RegRef& w : ef.writes)
          if (w.reg < nlocals) is_effect = true;
        break;
    }
    bool blocking = is_effect || !ef.jumps.empty() ||
                    ir.code[i].op == ROp::Jmp || ir.code[i].op == ROp::RetV ||
                    ir.code[i].op == ROp::DeoptNow;
    if (pending_effect && blocking) {
      err(effect_at, "effect not followed by a checkpoint before the next "
                     "effect or control transfer");
      pending_effect = false;
    }
    if (is_effect) {
      pending_effect = true;
      effect_at = i;
    }
  }
  return errs;
}

}  // namespace dl
