#include <algorithm>
#include <deque>
#include <map>

#include "dl/ir.hpp"
#include "dl/typing.hpp"
#include "dl/vm.hpp"

namespace dl {

namespace {

SlotCls cls_of(TypeTag t) {
  switch (t) {
    case TypeTag::IntScalar:
    case TypeTag::BoolScalar:
      return SlotCls::I64;
    case TypeTag::FloatScalar:
      return SlotCls::F64;
    case TypeTag::NumScalar:
      return SlotCls::NUM;
    default:
      return SlotCls::VAL;
  }
}

struct AbsSlot {
  LocalState st = LocalState::Missing;
  TypeTag tag = TypeTag::Any;
  bool operator==(const AbsSlot&) const = default;
};

struct AbsState {
  std::vector<AbsSlot> locals;
  std::vector<TypeTag> stack;
  bool operator==(const AbsState&) const = default;
};

bool merge_slot(AbsSlot& d, const AbsSlot& s) {
  AbsSlot before = d;
  if (d.st == LocalState::Missing && s.st == LocalState::Missing) {
    // nothing
  } else if (d.st == LocalState::Present && s.st == LocalState::Present) {
    d.tag = lub(d.tag, s.tag);
  } else {
    TypeTag t;
    if (d.st == LocalState::Missing)
      t = s.tag;
    else if (s.st == LocalState::Missing)
      t = d.tag;
    else
      t = lub(d.tag, s.tag);
    d.st = LocalState::Maybe;
    d.tag = t;
  }
  return !(d == before);
}

bool merge_state(AbsState& d, const AbsState& s) {
  bool changed = false;
  for (size_t i = 0; i < d.locals.size(); i++)
    changed |= merge_slot(d.locals[i], s.locals[i]);
  for (size_t i = 0; i < d.stack.size(); i++) {
    TypeTag t = lub(d.stack[i], s.stack[i]);
    if (t != d.stack[i]) {
      d.stack[i] = t;
      changed = true;
    }
  }
  return changed;
}

struct Succ {
  int pc;
  AbsState state;
};

class Translator {
 public:
  Translator(Vm& vm, const TranslateRequest& req, const FeedbackStore& fb)
      : vm_(vm), req_(req), fb_(fb), f_(req.fn) {
    L_ = f_->nlocals();
    depths_ = stack_depths(*f_);
    D_ = max_stack_depth(*f_);
    live_ = live_locals(*f_);
    scratch_ = L_ + D_;
    states_.resize(f_->code.size());
  }

  IRFunction run() {
    if (f_->id == 0)
      throw CompileUnsupported("top-level code is never compiled");
    if (req_.entry_pc < 0 || req_.entry_pc >= (int)f_->code.size() ||
        depths_[(size_t)req_.entry_pc] < 0)
      throw CompileUnsupported("invalid entry pc");
    if ((int)req_.seed_stack.size() != depths_[(size_t)req_.entry_pc])
      throw CompileUnsupported("seed stack depth mismatch");
    if ((int)req_.seed_locals.size() != L_)
      throw CompileUnsupported("seed locals size mismatch");

    ir_.src = f_;
    ir_.n_regs = L_ + D_ + 1;
    ir_.entry.entry_pc = req_.entry_pc;

    AbsState entry;
    entry.locals.resize((size_t)L_);
    for (int l = 0; l < L_; l++) {
      EntrySlot es;
      es.reg = l;
      if (req_.seed_locals[(size_t)l]) {
        TypeTag t = *req_.seed_locals[(size_t)l];
        entry.locals[(size_t)l] = {LocalState::Present, t};
        es.cls = cls_of(t);
        es.tag = t;
      }
      ir_.entry.locals.push_back(es);
    }
    for (size_t i = 0; i < req_.seed_stack.size(); i++) {
      TypeTag t = req_.seed_stack[i];
      entry.stack.push_back(t);
      ir_.entry.stack.push_back({(int32_t)(L_ + (int)i), cls_of(t), t});
    }

    // Phase 1: type fixpoint over reachable pcs.
    states_[(size_t)req_.entry_pc] = entry;
    std::deque<int> work{req_.entry_pc};
    while (!work.empty()) {
      int pc = work.front();
      work.pop_front();
      for (Succ& s : transfer(pc, *states_[(size_t)pc])) {
        auto& slot = states_[(size_t)s.pc];
        if (!slot) {
          slot = std::move(s.state);
          work.push_back(s.pc);
        } else if (merge_state(*slot, s.state)) {
          work.push_back(s.pc);
        }
      }
    }

    // Phase 2: emission using the final states.
    emitting_ = true;
    bc_to_ir_.assign(f_->code.size(), -1);
    emit(ROp::Checkpoint, exit_for_pc(req_.entry_pc));
    // Entry-state classes match the entry descriptor by construction.
    {
      // conversions from entry to the (possibly widened) fixpoint state
      emit_conversions(entry, *states_[(size_t)req_.entry_pc]);
    }
    // Code is laid out in bytecode order; when a back edge makes an earlier
    // pc reachable (entering mid-loop), control must not fall into it.
    for (int pc = 0; pc < req_.entry_pc; pc++)
      if (states_[(size_t)pc]) {
        int idx = emit(ROp::Jmp);
        fixups_.push_back(
            {idx, 0, req_.entry_pc, *states_[(size_t)req_.entry_pc]});
        break;
      }
    for (int pc = 0; pc < (int)f_->code.size(); pc++) {
      if (!states_[(size_t)pc]) continue;
      bc_to_ir_[(size_t)pc] = (int)ir_.code.size();
      effectful_ = false;
      std::vector<Succ> succs = transfer(pc, *states_[(size_t)pc]);
      const AbsState* fall = nullptr;
      for (const Succ& s : succs)
        if (s.pc == pc + 1) fall = &s.state;
      if (fall) {
        if (effectful_)
          emit(ROp::Checkpoint, exit_from_state(pc + 1, *fall));
        emit_conversions(*fall, *states_[(size_t)pc + 1]);
      }
    }
    // Patch jumps, inserting conversion stubs where edge classes differ.
    for (const Fixup& fx : fixups_) {
      auto convs = conversions(fx.edge, *states_[(size_t)fx.target_pc]);
      int target = bc_to_ir_[(size_t)fx.target_pc];
      if (!convs.empty()) {
        int stub = (int)ir_.code.size();
        for (const RInstr& c : convs) ir_.code.push_back(c);
        ir_.code.push_back({ROp::Jmp, target, 0, 0, 0});
        target = stub;
      }
      int32_t* field = fx.field == 0   ? &ir_.code[(size_t)fx.ir_idx].a
                       : fx.field == 1 ? &ir_.code[(size_t)fx.ir_idx].b
                                       : &ir_.code[(size_t)fx.ir_idx].c;
      *field = target;
    }
    return std::move(ir_);
  }

 private:
  // ---- emission helpers -------------------------------------------------

  int emit(ROp op, int32_t a = 0, int32_t b = 0, int32_t c = 0,
           int32_t d = 0) {
    if (!emitting_) return -1;
    if (collecting_) {
      conv_buf_.push_back({op, a, b, c, d});
      return -1;
    }
    ir_.code.push_back({op, a, b, c, d});
    return (int)ir_.code.size() - 1;
  }

  int iconst(int64_t v) {
    for (size_t i = 0; i < ir_.iconsts.size(); i++)
      if (ir_.iconsts[i] == v) return (int)i;
    ir_.iconsts.push_back(v);
    return (int)ir_.iconsts.size() - 1;
  }
  int fconst(double v) {
    ir_.fconsts.push_back(v);
    return (int)ir_.fconsts.size() - 1;
  }
  int vconst(const Value& v) {
    ir_.vconsts.push_back(v);
    return (int)ir_.vconsts.size() - 1;
  }
  int cell_idx(GlobalCell* c) {
    for (size_t i = 0; i < ir_.cells.size(); i++)
      if (ir_.cells[i] == c) return (int)i;
    ir_.cells.push_back(c);
    return (int)ir_.cells.size() - 1;
  }
  int callee_idx(const BytecodeFunction* fn) {
    for (size_t i = 0; i < ir_.callees.size(); i++)
      if (ir_.callees[i] == fn) return (int)i;
    ir_.callees.push_back(fn);
    return (int)ir_.callees.size() - 1;
  }

  SlotSrc slot_src(int reg, TypeTag tag) const {
    return {cls_of(tag), (int32_t)reg, tag};
  }

  // Exit built from the stored in-state of `pc`; valid for guards that fire
  // before any register of that state is overwritten.
  int exit_for_pc(int pc) {
    auto it = exit_cache_.find(pc);
    if (it != exit_cache_.end()) return it->second;
    int idx = exit_from_state(pc, *states_[(size_t)pc]);
    exit_cache_[pc] = idx;
    return idx;
  }

  int exit_from_state(int pc, const AbsState& st) {
    ExitDescr e;
    e.bc_pc = pc;
    for (size_t i = 0; i < st.stack.size(); i++)
      e.stack.push_back(slot_src(L_ + (int)i, st.stack[i]));
    for (int l = 0; l < L_; l++) {
      const AbsSlot& a = st.locals[(size_t)l];
      bool is_live = live_[(size_t)pc][(size_t)l];
      if (a.st == LocalState::Present && is_live) {
        e.locals.push_back(slot_src(l, a.tag));
      } else if (a.st == LocalState::Maybe && is_live) {
        throw CompileUnsupported("conditionally-assigned local " +
                                 f_->locals[(size_t)l] +
                                 " live at a checkpoint");
      } else {
        e.locals.push_back({SlotCls::Missing, 0, TypeTag::Any});
      }
    }
    ir_.exits.push_back(std::move(e));
    return (int)ir_.exits.size() - 1;
  }

  int make_guard(DeoptReasonKind kind, int site_pc, TypeTag expected,
                 int exit, int offending, SlotCls ocls, int line,
                 int expected_callee = -1) {
    GuardInfo g;
    g.kind = kind;
    g.site_pc = site_pc;
    g.expected = expected;
    g.exit = exit;
    g.offending = offending;
    g.offending_cls = ocls;
    g.line = line;
    g.expected_callee = expected_callee;
    ir_.guards.push_back(g);
    return (int)ir_.guards.size() - 1;
  }

  // Error-path guard: lowers a would-be runtime error as a deopt exit so the
  // baseline raises it.
  int error_guard(int pc) {
    return make_guard(DeoptReasonKind::BranchPruneFail, pc, TypeTag::Any,
                     exit_for_pc(pc), -1, SlotCls::VAL,
                     f_->code[(size_t)pc].line);
  }

  // Widening conversion of one slot between representations.
  void convert(int reg, TypeTag from, SlotCls fc, SlotCls tc) {
    if (fc == tc) return;
    if (fc == SlotCls::I64 && tc == SlotCls::NUM) {
      emit(ROp::ItoN, reg, reg);
    } else if (fc == SlotCls::F64 && tc == SlotCls::NUM) {
      emit(ROp::FtoN, reg, reg);
    } else if (fc == SlotCls::I64 && tc == SlotCls::VAL) {
      emit(from == TypeTag::BoolScalar ? ROp::BtoV : ROp::ItoV, reg, reg);
    } else if (fc == SlotCls::F64 && tc == SlotCls::VAL) {
      emit(ROp::FtoV, reg, reg);
    } else if (fc == SlotCls::NUM && tc == SlotCls::VAL) {
      emit(ROp::NtoV, reg, reg);
    } else {
      throw CompileUnsupported("impossible representation change");
    }
  }

  std::vector<RInstr> conversions(const AbsState& out, const AbsState& in) {
    conv_buf_.clear();
    collecting_ = true;
    emit_conversions(out, in);
    collecting_ = false;
    return std::move(conv_buf_);
  }

  void emit_conversions(const AbsState& out, const AbsState& in) {
    for (int l = 0; l < L_; l++) {
      const AbsSlot& o = out.locals[(size_t)l];
      const AbsSlot& i = in.locals[(size_t)l];
      if (o.st != LocalState::Present || i.st != LocalState::Present)
        continue;  // Maybe locals are unreadable; no representation needed
      convert(l, o.tag, cls_of(o.tag), cls_of(i.tag));
    }
    for (size_t s = 0; s < out.stack.size(); s++)
      convert(L_ + (int)s, out.stack[s], cls_of(out.stack[s]),
              cls_of(in.stack[s]));
  }

  void box(int reg, TypeTag tag) { convert(reg, tag, cls_of(tag), SlotCls::VAL); }

  // ---- speculation decisions -------------------------------------------

  // Feedback-driven narrowing: guard only when the recorded monomorphic tag
  // is strictly below both NumVec and the static type.
  std::optional<TypeTag> speculate(int pc, TypeTag in) const {
    const TypeRecord* rec = fb_.type_at(pc);
    if (!rec || !rec->monomorphic()) return std::nullopt;
    if (!subtype(rec->tag, TypeTag::NumVec)) return std::nullopt;
    if (!subtype(rec->tag, in) || rec->tag == in) return std::nullopt;
    return rec->tag;
  }

  // 0 = no pruning, 1 = speculate jump taken, 2 = speculate fall-through.
  int branch_speculation(int pc) const {
    const BranchRecord* rec = fb_.branch_at(pc);
    if (!rec || rec->total() < 100) return 0;
    double total = (double)rec->total();
    if ((double)rec->taken / total >= 0.99) return 1;
    if ((double)rec->not_taken / total >= 0.99) return 2;
    return 0;
  }

  // Emits the guarded narrowing of a value slot to `gtag`; the guard's exit
  // re-executes `exit_pc` (or the given exit). Returns nothing; caller
  // updates the abstract tag.
  void emit_narrow(int reg, TypeTag in, TypeTag gtag, int site_pc, int exit,
                   int line) {
    int g = make_guard(DeoptReasonKind::TypeGuardFail, site_pc, gtag, exit,
                       reg, cls_of(in), line);
    SlotCls fc = cls_of(in);
    if (fc == SlotCls::VAL) {
      switch (gtag) {
        case TypeTag::IntScalar: emit(ROp::GVtoI, reg, reg, g); break;
        case TypeTag::FloatScalar: emit(ROp::GVtoF, reg, reg, g); break;
        case TypeTag::NumScalar: emit(ROp::GVtoN, reg, reg, g); break;
        default: emit(ROp::GuardT, reg, g); break;  // vector layouts
      }
    } else if (fc == SlotCls::NUM) {
      if (gtag == TypeTag::IntScalar)
        emit(ROp::GNtoI, reg, reg, g);
      else if (gtag == TypeTag::FloatScalar)
        emit(ROp::GNtoF, reg, reg, g);
    }
    // I64/F64 inputs are already below any strictly-smaller gtag; the
    // speculate() precondition makes this unreachable.
  }

  // Converts the slot holding an index value to a raw i64 (1-based).
  // Callers have excluded BoolScalar (a statically certain TypeError).
  void index_to_i64(int reg, TypeTag t, int pc) {
    switch (cls_of(t)) {
      case SlotCls::I64:
        break;
      case SlotCls::F64:
        emit(ROp::FtoIt, reg, reg, error_guard(pc));
        break;
      case SlotCls::NUM:
        emit(ROp::NtoIt, reg, reg, error_guard(pc));
        break;
      default:
        emit(ROp::GVtoIdx, reg, reg, error_guard(pc));
        break;
    }
  }

  void deopt_now(int pc) { emit(ROp::DeoptNow, error_guard(pc)); }

  // ---- the shared transfer-and-emit function ---------------------------

  std::vector<Succ> transfer(int pc, const AbsState& in) {
    AbsState st = in;
    const Instr& bc = f_->code[(size_t)pc];
    const int d = (int)st.stack.size();
    auto push = [&](TypeTag t) { st.stack.push_back(t); };
    auto pop = [&]() {
      TypeTag t = st.stack.back();
      st.stack.pop_back();
      return t;
    };
    auto top_reg = [&](int from_top) { return L_ + d - 1 - from_top; };
    auto fall = [&]() { return std::vector<Succ>{{pc + 1, std::move(st)}}; };
    auto none = [&]() { return std::vector<Succ>{}; };

    switch (bc.op) {
      case Opcode::LoadConst: {
        const Value& v = f_->consts[(size_t)bc.a];
        TypeTag t = type_of(v);
        int dst = L_ + d;
        switch (cls_of(t)) {
          case SlotCls::I64:
            emit(ROp::LdCI, dst,
                 emitting_ ? iconst(v.is_bool() ? (int64_t)v.bool1()
                                                : v.int1())
                           : 0);
            break;
          case SlotCls::F64:
            emit(ROp::LdCF, dst, emitting_ ? fconst(v.float1()) : 0);
            break;
          default:
            emit(ROp::LdCV, dst, emitting_ ? vconst(v) : 0);
            break;
        }
        push(t);
        return fall();
      }

      case Opcode::LoadLocal: {
        const AbsSlot& l = st.locals[(size_t)bc.a];
        if (l.st == LocalState::Maybe)
          throw CompileUnsupported("read of conditionally-assigned local " +
                                   f_->locals[(size_t)bc.a]);
        if (l.st == LocalState::Missing) {
          deopt_now(pc);  // baseline raises MissingError
          return none();
        }
        int dst = L_ + d;
        TypeTag t = l.tag;
        switch (cls_of(t)) {
          case SlotCls::I64: emit(ROp::MovI, dst, bc.a); break;
          case SlotCls::F64: emit(ROp::MovF, dst, bc.a); break;
          case SlotCls::NUM: emit(ROp::MovN, dst, bc.a); break;
          default: emit(ROp::MovV, dst, bc.a); break;
        }
        if (auto g = speculate(pc, t)) {
          if (emitting_)
            emit_narrow(dst, t, *g, pc, exit_for_pc(pc), bc.line);
          t = *g;
        }
        push(t);
        return fall();
      }

      case Opcode::StoreLocal: {
        TypeTag t = pop();
        int src = top_reg(0);
        switch (cls_of(t)) {
          case SlotCls::I64: emit(ROp::MovI, bc.a, src); break;
          case SlotCls::F64: emit(ROp::MovF, bc.a, src); break;
          case SlotCls::NUM: emit(ROp::MovN, bc.a, src); break;
          default: emit(ROp::MovV, bc.a, src); break;
        }
        st.locals[(size_t)bc.a] = {LocalState::Present, t};
        effectful_ = true;
        return fall();
      }

      case Opcode::LoadGlobal: {
        GlobalCell* cell =
            vm_.global_cell(f_->global_names[(size_t)bc.a]);
        int dst = L_ + d;
        emit(ROp::LdG, dst, emitting_ ? cell_idx(cell) : 0,
             emitting_ ? error_guard(pc) : 0);
        TypeTag t = TypeTag::Any;
        if (auto g = speculate(pc, t)) {
          if (emitting_)
            emit_narrow(dst, t, *g, pc, exit_for_pc(pc), bc.line);
          t = *g;
        }
        push(t);
        return fall();
      }

      case Opcode::StoreGlobal:
      case Opcode::IndexSetV:
        throw CompileUnsupported("top-level-only instruction");

      case Opcode::Call: {
        int n = bc.a;
        int argbase = L_ + d - n;
        int calleeslot = argbase - 1;
        TypeTag ct = st.stack[(size_t)(d - n - 1)];
        if (emitting_)
          for (int i = 0; i < n; i++)
            box(argbase + i, st.stack[(size_t)(d - n + i)]);

        const CallRecord* cr = fb_.call_at(pc);
        const BytecodeFunction* target =
            cr ? cr->monomorphic_target() : nullptr;
        bool emitted = false;
        if (target) {
          // Stable-global pattern: callee loaded from a global that still
          // holds the recorded target. No run-time check; the dependency is
          // registered with the invalidation registry.
          std::string gname = stable_callee_global(pc, d - n - 1);
          if (!gname.empty()) {
            GlobalCell* cell = vm_.global_cell(gname);
            if (cell->value && cell->value->is_closure() &&
                cell->value->closure_ref().fn == target) {
              if (emitting_) {
                add_dep(gname, cell->version);
                emit(ROp::CallD, calleeslot, callee_idx(target), argbase, n);
              }
              emitted = true;
            }
          }
          if (!emitted) {
            if (emitting_) {
              int vc = vconst(Value::closure(target));
              int g = make_guard(DeoptReasonKind::CallTargetFail, pc,
                                 TypeTag::Closure, exit_for_pc(pc),
                                 calleeslot, SlotCls::VAL, bc.line, vc);
              emit(ROp::GuardFn, calleeslot, g, vc);
              emit(ROp::CallD, calleeslot, callee_idx(target), argbase, n);
            }
            emitted = true;
          }
        }
        if (!emitted) {
          if (ct != TypeTag::Closure) {
            if (emitting_) {
              int g = make_guard(DeoptReasonKind::BranchPruneFail, pc,
                                 TypeTag::Closure, exit_for_pc(pc),
                                 calleeslot, SlotCls::VAL, bc.line);
              emit(ROp::GuardT, calleeslot, g);
            }
          }
          emit(ROp::CallC, calleeslot, argbase, n);
        }
        st.stack.resize((size_t)(d - n - 1));
        TypeTag t = TypeTag::Any;
        push(t);
        effectful_ = true;
        // Result-type speculation: the exit must resume after the call, with
        // the raw boxed result.
        if (auto g = speculate(pc, t)) {
          if (emitting_) {
            int ex = exit_from_state(pc + 1, st);
            emit_narrow(calleeslot, t, *g, pc, ex, bc.line);
          }
          st.stack.back() = *g;
        }
        return fall();
      }

      case Opcode::BinOp: {
        BinOp op = (BinOp)bc.a;
        TypeTag tb = pop();
        TypeTag ta = pop();
        int ra = L_ + d - 2, rb = L_ + d - 1;
        TypeTag t = emit_binop(pc, op, ra, rb, ta, tb);
        push(t);
        if (auto g = speculate(pc, t)) {
          if (emitting_) {
            int ex = exit_from_state(pc + 1, st);
            emit_narrow(ra, t, *g, pc, ex, bc.line);
          }
          st.stack.back() = *g;
        }
        return fall();
      }

      case Opcode::IndexGet: {
        TypeTag ti = pop();
        TypeTag tv = pop();
        int rv = L_ + d - 2, rimm = L_ + d - 1;
        if (ti == TypeTag::BoolScalar) {
          deopt_now(pc);  // bool index: certain TypeError
          return none();
        }
        if (emitting_) index_to_i64(rimm, ti, pc);
        TypeTag t = emit_index_get(pc, rv, rimm, tv);
        push(t);
        if (auto g = speculate(pc, t)) {
          if (emitting_) {
            int ex = exit_from_state(pc + 1, st);
            emit_narrow(rv, t, *g, pc, ex, bc.line);
          }
          st.stack.back() = *g;
        }
        return fall();
      }

      case Opcode::IndexSet: {
        TypeTag txv = pop();  // value
        TypeTag ti = pop();   // index
        int rval = L_ + d - 1, rix = L_ + d - 2;
        const AbsSlot& l = st.locals[(size_t)bc.a];
        if (l.st == LocalState::Maybe)
          throw CompileUnsupported("indexed write to conditionally-assigned "
                                   "local " + f_->locals[(size_t)bc.a]);
        if (l.st == LocalState::Missing) {
          deopt_now(pc);
          return none();
        }
        if (ti == TypeTag::BoolScalar) {
          deopt_now(pc);
          return none();
        }
        if (emitting_) index_to_i64(rix, ti, pc);
        TypeTag nt = emit_index_set(pc, bc.a, rix, rval, l.tag, txv);
        st.locals[(size_t)bc.a] = {LocalState::Present, nt};
        effectful_ = true;
        return fall();
      }

      case Opcode::MakeVec: {
        int n = bc.a;
        std::vector<TypeTag> parts(st.stack.end() - n, st.stack.end());
        int base = L_ + d - n;
        if (emitting_)
          for (int i = 0; i < n; i++) box(base + i, parts[(size_t)i]);
        st.stack.resize((size_t)(d - n));
        if (n == 0)
          emit(ROp::LdCV, base, emitting_ ? vconst(Value()) : 0);
        else
          emit(ROp::MkVec, base, base, n);
        push(concat_type(parts));
        return fall();
      }

      case Opcode::Length: {
        TypeTag t = pop();
        int r = top_reg(0);
        if (cls_of(t) == SlotCls::VAL) {
          emit(ROp::LenV, r, r);
        } else {
          emit(ROp::LdCI, r, emitting_ ? iconst(1) : 0);
        }
        push(TypeTag::IntScalar);
        return fall();
      }

      case Opcode::Print: {
        TypeTag t = st.stack.back();
        int r = top_reg(0);
        if (emitting_) {
          if (cls_of(t) == SlotCls::VAL) {
            emit(ROp::PrintV, r);
          } else {
            convert_to_scratch(r, t);
            emit(ROp::PrintV, scratch_);
          }
        }
        effectful_ = true;
        return fall();
      }

      case Opcode::Pop:
        pop();
        return fall();

      case Opcode::Branch: {
        int target = pc + 1 + bc.a;
        int idx = emit(ROp::Jmp);
        if (emitting_) fixups_.push_back({idx, 0, target, st});
        return {{target, std::move(st)}};
      }

      case Opcode::BranchIfFalse: {
        TypeTag t = pop();
        int r = top_reg(0);
        SlotCls c = cls_of(t);
        if (c == SlotCls::F64 || c == SlotCls::NUM) {
          deopt_now(pc);  // never a boolean: baseline raises TypeError
          return none();
        }
        if (c == SlotCls::VAL)
          emit(ROp::GVtoB, r, r, emitting_ ? error_guard(pc) : 0);
        else if (t == TypeTag::IntScalar) {
          deopt_now(pc);
          return none();
        }
        int target = pc + 1 + bc.a;
        switch (branch_speculation(pc)) {
          case 1: {  // almost always jumps
            if (emitting_) {
              int g = make_guard(DeoptReasonKind::BranchPruneFail, pc,
                                 TypeTag::Any, exit_for_pc(pc), -1,
                                 SlotCls::I64, bc.line);
              emit(ROp::GuardFalse, r, g);
            }
            int idx = emit(ROp::Jmp);
            if (emitting_) fixups_.push_back({idx, 0, target, st});
            return {{target, std::move(st)}};
          }
          case 2: {  // almost always falls through
            if (emitting_) {
              int g = make_guard(DeoptReasonKind::BranchPruneFail, pc,
                                 TypeTag::Any, exit_for_pc(pc), -1,
                                 SlotCls::I64, bc.line);
              emit(ROp::GuardTrue, r, g);
            }
            return fall();
          }
          default: {
            int idx = emit(ROp::Jz, r);
            if (emitting_) fixups_.push_back({idx, 1, target, st});
            std::vector<Succ> out;
            out.push_back({target, st});
            out.push_back({pc + 1, std::move(st)});
            return out;
          }
        }
      }

      case Opcode::ForSeqInit: {
        TypeTag th = pop();
        TypeTag tl = pop();
        int rlo = L_ + d - 2, rhi = L_ + d - 1;
        auto never_int = [](TypeTag t) {
          return t == TypeTag::BoolScalar || cls_of(t) == SlotCls::F64;
        };
        if (never_int(tl) || never_int(th)) {
          deopt_now(pc);  // non-integer range endpoint: certain TypeError
          return none();
        }
        narrow_to_int(rlo, tl, pc);
        narrow_to_int(rhi, th, pc);
        if (emitting_) {
          emit(ROp::LdCI, scratch_, iconst(1));
          emit(ROp::SubI, bc.a, rlo, scratch_);
          emit(ROp::MovI, rlo, rhi);  // stack becomes [hi]
        }
        st.locals[(size_t)bc.a] = {LocalState::Present, TypeTag::IntScalar};
        push(TypeTag::IntScalar);
        effectful_ = true;
        return fall();
      }

      case Opcode::ForSeqNext: {
        const AbsSlot& l = st.locals[(size_t)bc.a];
        if (l.st != LocalState::Present || l.tag != TypeTag::IntScalar ||
            st.stack.back() != TypeTag::IntScalar)
          throw CompileUnsupported("loop state is not integer");
        int rhi = top_reg(0);
        int exit_target = pc + 1 + bc.b;
        int idx = emit(ROp::ForNext, bc.a, rhi);
        AbsState exit_state = st;
        exit_state.stack.pop_back();
        if (emitting_) fixups_.push_back({idx, 2, exit_target, exit_state});
        effectful_ = true;  // writes the loop local
        std::vector<Succ> out;
        out.push_back({exit_target, std::move(exit_state)});
        out.push_back({pc + 1, std::move(st)});
        return out;
      }

      case Opcode::Return: {
        TypeTag t = pop();
        int r = top_reg(0);
        if (emitting_) box(r, t);
        emit(ROp::RetV, r);
        return none();
      }
    }
    return none();
  }

  // Narrows a slot to a raw int scalar (for-range endpoints); non-integers
  // exit to the baseline which raises the TypeError. Callers have excluded
  // the statically-certain failures (bool, float).
  void narrow_to_int(int reg, TypeTag t, int pc) {
    switch (cls_of(t)) {
      case SlotCls::I64:
        break;
      case SlotCls::NUM:
        if (emitting_) emit(ROp::GNtoI, reg, reg, error_guard(pc));
        break;
      default:
        if (emitting_) emit(ROp::GVtoI, reg, reg, error_guard(pc));
        break;
    }
  }

  void convert_to_scratch(int reg, TypeTag t) {
    switch (cls_of(t)) {
      case SlotCls::I64:
        emit(t == TypeTag::BoolScalar ? ROp::BtoV : ROp::ItoV, scratch_, reg);
        break;
      case SlotCls::F64: emit(ROp::FtoV, scratch_, reg); break;
      case SlotCls::NUM: emit(ROp::NtoV, scratch_, reg); break;
      default: emit(ROp::MovV, scratch_, reg); break;
    }
  }

  TypeTag emit_binop(int pc, BinOp op, int ra, int rb, TypeTag ta,
                     TypeTag tb) {
    SlotCls ca = cls_of(ta), cb = cls_of(tb);
    bool scalar_a = ca != SlotCls::VAL, scalar_b = cb != SlotCls::VAL;
    bool bool_operand =
        ta == TypeTag::BoolScalar || tb == TypeTag::BoolScalar;
    if (scalar_a && scalar_b && !bool_operand) {
      // unify representations
      if (ca == SlotCls::NUM || cb == SlotCls::NUM) {
        if (emitting_) {
          if (ca == SlotCls::I64) emit(ROp::ItoN, ra, ra);
          if (ca == SlotCls::F64) emit(ROp::FtoN, ra, ra);
          if (cb == SlotCls::I64) emit(ROp::ItoN, rb, rb);
          if (cb == SlotCls::F64) emit(ROp::FtoN, rb, rb);
        }
        switch (op) {
          case BinOp::Add: emit(ROp::AddN, ra, ra, rb); return TypeTag::NumScalar;
          case BinOp::Sub: emit(ROp::SubN, ra, ra, rb); return TypeTag::NumScalar;
          case BinOp::Mul: emit(ROp::MulN, ra, ra, rb); return TypeTag::NumScalar;
          case BinOp::Div: emit(ROp::DivN, ra, ra, rb); return TypeTag::FloatScalar;
          case BinOp::Eq: emit(ROp::EqN, ra, ra, rb); return TypeTag::BoolScalar;
          case BinOp::Lt: emit(ROp::LtN, ra, ra, rb); return TypeTag::BoolScalar;
          case BinOp::Le: emit(ROp::LeN, ra, ra, rb); return TypeTag::BoolScalar;
        }
      }
      if (ca == SlotCls::F64 || cb == SlotCls::F64 || op == BinOp::Div) {
        if (emitting_) {
          if (ca == SlotCls::I64) emit(ROp::ItoF, ra, ra);
          if (cb == SlotCls::I64) emit(ROp::ItoF, rb, rb);
        }
        switch (op) {
          case BinOp::Add: emit(ROp::AddF, ra, ra, rb); return TypeTag::FloatScalar;
          case BinOp::Sub: emit(ROp::SubF, ra, ra, rb); return TypeTag::FloatScalar;
          case BinOp::Mul: emit(ROp::MulF, ra, ra, rb); return TypeTag::FloatScalar;
          case BinOp::Div: emit(ROp::DivF, ra, ra, rb); return TypeTag::FloatScalar;
          case BinOp::Eq: emit(ROp::EqF, ra, ra, rb); return TypeTag::BoolScalar;
          case BinOp::Lt: emit(ROp::LtF, ra, ra, rb); return TypeTag::BoolScalar;
          case BinOp::Le: emit(ROp::LeF, ra, ra, rb); return TypeTag::BoolScalar;
        }
      }
      switch (op) {
        case BinOp::Add: emit(ROp::AddI, ra, ra, rb); return TypeTag::IntScalar;
        case BinOp::Sub: emit(ROp::SubI, ra, ra, rb); return TypeTag::IntScalar;
        case BinOp::Mul: emit(ROp::MulI, ra, ra, rb); return TypeTag::IntScalar;
        case BinOp::Eq: emit(ROp::EqI, ra, ra, rb); return TypeTag::BoolScalar;
        case BinOp::Lt: emit(ROp::LtI, ra, ra, rb); return TypeTag::BoolScalar;
        case BinOp::Le: emit(ROp::LeI, ra, ra, rb); return TypeTag::BoolScalar;
        default: break;
      }
    }
    // Generic path: full binop semantics on boxed values.
    if (emitting_) {
      box(ra, ta);
      box(rb, tb);
      int g = error_guard(pc);
      switch (op) {
        case BinOp::Add: emit(ROp::AddV, ra, ra, rb, g); break;
        case BinOp::Sub: emit(ROp::SubV, ra, ra, rb, g); break;
        case BinOp::Mul: emit(ROp::MulV, ra, ra, rb, g); break;
        case BinOp::Div: emit(ROp::DivV, ra, ra, rb, g); break;
        case BinOp::Eq: emit(ROp::EqV, ra, ra, rb, g); break;
        case BinOp::Lt: emit(ROp::LtV, ra, ra, rb, g); break;
        case BinOp::Le: emit(ROp::LeV, ra, ra, rb, g); break;
      }
    }
    return binop_type(op, ta, tb);
  }

  TypeTag emit_index_get(int pc, int rv, int ri, TypeTag tv) {
    switch (tv) {
      case TypeTag::IntVec:
        emit(ROp::IdxGetI, rv, rv, ri, emitting_ ? error_guard(pc) : 0);
        return TypeTag::IntScalar;
      case TypeTag::FloatVec:
        emit(ROp::IdxGetF, rv, rv, ri, emitting_ ? error_guard(pc) : 0);
        return TypeTag::FloatScalar;
      case TypeTag::BoolVec:
        emit(ROp::IdxGetB, rv, rv, ri, emitting_ ? error_guard(pc) : 0);
        return TypeTag::BoolScalar;
      case TypeTag::GenVec:
        emit(ROp::IdxGetG, rv, rv, ri, emitting_ ? error_guard(pc) : 0);
        return TypeTag::Any;
      default: {
        if (cls_of(tv) != SlotCls::VAL && emitting_) box(rv, tv);
        emit(ROp::IdxGetV, rv, rv, ri, emitting_ ? error_guard(pc) : 0);
        return TypeTag::Any;
      }
    }
  }

  TypeTag emit_index_set(int pc, int lreg, int rix, int rval, TypeTag tv,
                         TypeTag tx) {
    TypeTag result = index_set_type(tv, tx);
    if (tv == TypeTag::IntVec && tx == TypeTag::IntScalar) {
      emit(ROp::IdxSetI, lreg, rix, rval, emitting_ ? error_guard(pc) : 0);
      return result;
    }
    if (tv == TypeTag::FloatVec && subtype(tx, TypeTag::NumScalar)) {
      if (emitting_) {
        if (cls_of(tx) == SlotCls::I64) emit(ROp::ItoF, rval, rval);
        if (cls_of(tx) == SlotCls::NUM) emit(ROp::NtoFc, rval, rval);
      }
      emit(ROp::IdxSetF, lreg, rix, rval, emitting_ ? error_guard(pc) : 0);
      return result;
    }
    if (tv == TypeTag::BoolVec && tx == TypeTag::BoolScalar) {
      emit(ROp::IdxSetB, lreg, rix, rval, emitting_ ? error_guard(pc) : 0);
      return result;
    }
    if (tv == TypeTag::GenVec) {
      if (emitting_) box(rval, tx);
      emit(ROp::IdxSetG, lreg, rix, rval, emitting_ ? error_guard(pc) : 0);
      return result;
    }
    if (emitting_) {
      if (cls_of(tv) != SlotCls::VAL) box(lreg, tv);
      box(rval, tx);
      emit(ROp::IdxSetV, lreg, rix, rval, error_guard(pc));
    }
    return result;
  }

  // Finds the global name whose LoadGlobal pushed the callee slot, if that
  // is statically evident (straight-line producer, no joins in between).
  std::string stable_callee_global(int call_pc, int slot_depth) const {
    for (int p = call_pc - 1; p >= 0; p--) {
      if (depths_[(size_t)p] < 0) return "";
      if (is_jump_target(p + 1)) return "";
      if (depths_[(size_t)p] == slot_depth) {
        const Instr& in = f_->code[(size_t)p];
        if (in.op == Opcode::LoadGlobal)
          return f_->global_names[(size_t)in.a];
        return "";
      }
      if (depths_[(size_t)p] < slot_depth) return "";
    }
    return "";
  }

  bool is_jump_target(int pc) const {
    for (size_t p = 0; p < f_->code.size(); p++) {
      const Instr& in = f_->code[p];
      if (in.op == Opcode::Branch && (int)p + 1 + in.a == pc) return true;
      if (in.op == Opcode::BranchIfFalse && (int)p + 1 + in.a == pc)
        return true;
      if (in.op == Opcode::ForSeqNext && (int)p + 1 + in.b == pc) return true;
    }
    return false;
  }

  void add_dep(const std::string& name, uint64_t version) {
    for (auto& d : ir_.deps)
      if (d.first == name) return;
    ir_.deps.emplace_back(name, version);
  }

  struct Fixup {
    int ir_idx;
    int field;  // 0 = a, 1 = b, 2 = c
    int target_pc;
    AbsState edge;
  };

  Vm& vm_;
  const TranslateRequest& req_;
  const FeedbackStore& fb_;
  const BytecodeFunction* f_;
  int L_ = 0, D_ = 0, scratch_ = 0;
  std::vector<int> depths_;
  std::vector<std::vector<bool>> live_;
  std::vector<std::optional<AbsState>> states_;
  IRFunction ir_;
  bool emitting_ = false;
  bool effectful_ = false;
  bool collecting_ = false;
  std::vector<RInstr> conv_buf_;
  std::vector<int> bc_to_ir_;
  std::vector<Fixup> fixups_;
  std::map<int, int> exit_cache_;
};

}  // namespace

IRFunction translate(Vm& vm, const TranslateRequest& req,
                     const FeedbackStore& feedback) {
  return Translator(vm, req, feedback).run();
}

}  // namespace dl
