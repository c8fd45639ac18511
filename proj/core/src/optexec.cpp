#include <stdexcept>

#include "dl/vm.hpp"

namespace dl {

namespace {

// Unboxed numeric scalar of dynamic int/float kind (the "num" file).
struct NumBox {
  int64_t i = 0;
  double f = 0;
  bool is_f = false;
  double as_f() const { return is_f ? f : (double)i; }
};

bool in_index_range(double d) { return d >= -9.2e18 && d <= 9.2e18; }

}  // namespace

Value optexec_execute(Vm& vm, Continuation& cont, std::vector<Value> stack,
                      std::vector<std::optional<Value>> locals) {
  const IRFunction& p = cont.prog;
  cont.exec_count++;

  std::vector<int64_t> ri((size_t)p.n_regs, 0);
  std::vector<double> rf((size_t)p.n_regs, 0.0);
  std::vector<NumBox> rn((size_t)p.n_regs);
  std::vector<Value> rv((size_t)p.n_regs);

  auto seed = [&](const EntrySlot& e, const Value& v) {
    if (vm.cfg.debug_checks && e.tag != TypeTag::Any &&
        !subtype(type_of(v), e.tag))
      throw std::logic_error("entry value violates assumed type");
    switch (e.cls) {
      case SlotCls::I64:
        ri[(size_t)e.reg] = v.is_bool() ? (int64_t)v.bool1() : v.int1();
        break;
      case SlotCls::F64:
        rf[(size_t)e.reg] = v.float1();
        break;
      case SlotCls::NUM:
        if (v.is_int())
          rn[(size_t)e.reg] = {v.int1(), 0, false};
        else
          rn[(size_t)e.reg] = {0, v.float1(), true};
        break;
      case SlotCls::VAL:
        rv[(size_t)e.reg] = v;
        break;
      default:
        break;
    }
  };
  locals.resize((size_t)(p.src ? p.src->nlocals() : 0));
  for (size_t l = 0; l < p.entry.locals.size(); l++) {
    const EntrySlot& e = p.entry.locals[l];
    if (e.cls == SlotCls::Missing) continue;
    if (!locals[l])
      throw std::logic_error("entry local missing a value");
    seed(e, *locals[l]);
  }
  if (p.entry.stack.size() != stack.size())
    throw std::logic_error("entry stack size mismatch");
  for (size_t s = 0; s < stack.size(); s++) seed(p.entry.stack[s], stack[s]);

  auto read_slot = [&](const SlotSrc& s) -> Value {
    switch (s.cls) {
      case SlotCls::I64:
        return s.type == TypeTag::BoolScalar
                   ? Value::bool_scalar(ri[(size_t)s.idx] != 0)
                   : Value::int_scalar(ri[(size_t)s.idx]);
      case SlotCls::F64:
        return Value::float_scalar(rf[(size_t)s.idx]);
      case SlotCls::NUM: {
        const NumBox& n = rn[(size_t)s.idx];
        return n.is_f ? Value::float_scalar(n.f) : Value::int_scalar(n.i);
      }
      case SlotCls::VAL:
        return rv[(size_t)s.idx];
      case SlotCls::ConstV:
        return p.vconsts[(size_t)s.idx];
      default:
        throw std::logic_error("read of a missing framestate slot");
    }
  };

  auto materialize = [&](const ExitDescr& x) {
    FrameState fs;
    fs.fn = p.src;
    fs.pc = x.bc_pc;
    fs.stack.reserve(x.stack.size());
    for (const SlotSrc& s : x.stack) fs.stack.push_back(read_slot(s));
    fs.locals.reserve(x.locals.size());
    for (const SlotSrc& s : x.locals) {
      if (s.cls == SlotCls::Missing)
        fs.locals.emplace_back(std::nullopt);
      else
        fs.locals.emplace_back(read_slot(s));
    }
    return fs;
  };

  auto fail_guard = [&](int gi, bool forced) -> Value {
    const GuardInfo& g = p.guards[(size_t)gi];
    DeoptReason r;
    r.kind = g.kind;
    r.site_pc = g.site_pc;
    r.expected = g.expected;
    r.forced = forced;
    r.line = g.line;
    if (g.offending >= 0) {
      Value ov = read_slot({g.offending_cls, g.offending, TypeTag::Any});
      r.actual = type_of(ov);
      if (ov.is_closure()) r.actual_callee = ov.closure_ref().fn;
    } else {
      r.actual = g.expected;
    }
    if (g.expected_callee >= 0)
      r.expected_callee =
          p.vconsts[(size_t)g.expected_callee].closure_ref().fn;
    return vm.handle_deopt(&cont, materialize(p.exits[(size_t)g.exit]), r);
  };

  auto call_out = [&](const BytecodeFunction* target, int argbase, int n) {
    std::vector<Value> args(rv.begin() + argbase, rv.begin() + argbase + n);
    bool saved = vm.in_deoptless;
    vm.in_deoptless = false;
    Value res = vm.call(target, std::move(args));
    vm.in_deoptless = saved;
    return res;
  };

  int pc = 0;
  for (;;) {
    const RInstr& in = p.code[(size_t)pc];
    switch (in.op) {
      case ROp::LdCI: ri[(size_t)in.a] = p.iconsts[(size_t)in.b]; break;
      case ROp::LdCF: rf[(size_t)in.a] = p.fconsts[(size_t)in.b]; break;
      case ROp::LdCV: rv[(size_t)in.a] = p.vconsts[(size_t)in.b]; break;
      case ROp::LdG: {
        if (vm.force_fail()) return fail_guard(in.c, true);
        GlobalCell* cell = p.cells[(size_t)in.b];
        if (!cell->value) return fail_guard(in.c, false);
        rv[(size_t)in.a] = *cell->value;
        break;
      }

      case ROp::MovI: ri[(size_t)in.a] = ri[(size_t)in.b]; break;
      case ROp::MovF: rf[(size_t)in.a] = rf[(size_t)in.b]; break;
      case ROp::MovN: rn[(size_t)in.a] = rn[(size_t)in.b]; break;
      case ROp::MovV: rv[(size_t)in.a] = rv[(size_t)in.b]; break;
      case ROp::ItoF: rf[(size_t)in.a] = (double)ri[(size_t)in.b]; break;
      case ROp::ItoN: rn[(size_t)in.a] = {ri[(size_t)in.b], 0, false}; break;
      case ROp::FtoN: rn[(size_t)in.a] = {0, rf[(size_t)in.b], true}; break;
      case ROp::ItoV:
        rv[(size_t)in.a] = Value::int_scalar(ri[(size_t)in.b]);
        break;
      case ROp::FtoV:
        rv[(size_t)in.a] = Value::float_scalar(rf[(size_t)in.b]);
        break;
      case ROp::BtoV:
        rv[(size_t)in.a] = Value::bool_scalar(ri[(size_t)in.b] != 0);
        break;
      case ROp::NtoV: {
        const NumBox& n = rn[(size_t)in.b];
        rv[(size_t)in.a] =
            n.is_f ? Value::float_scalar(n.f) : Value::int_scalar(n.i);
        break;
      }
      case ROp::NtoFc: rf[(size_t)in.a] = rn[(size_t)in.b].as_f(); break;

      case ROp::GVtoI: {
        if (vm.force_fail()) return fail_guard(in.c, true);
        const Value& v = rv[(size_t)in.b];
        if (!v.is_int() || v.length() != 1) return fail_guard(in.c, false);
        ri[(size_t)in.a] = v.int1();
        break;
      }
      case ROp::GVtoF: {
        if (vm.force_fail()) return fail_guard(in.c, true);
        const Value& v = rv[(size_t)in.b];
        if (!v.is_float() || v.length() != 1) return fail_guard(in.c, false);
        rf[(size_t)in.a] = v.float1();
        break;
      }
      case ROp::GVtoB: {
        if (vm.force_fail()) return fail_guard(in.c, true);
        const Value& v = rv[(size_t)in.b];
        if (!v.is_bool() || v.length() != 1) return fail_guard(in.c, false);
        ri[(size_t)in.a] = (int64_t)v.bool1();
        break;
      }
      case ROp::GVtoN: {
        if (vm.force_fail()) return fail_guard(in.c, true);
        const Value& v = rv[(size_t)in.b];
        if (v.is_int() && v.length() == 1)
          rn[(size_t)in.a] = {v.int1(), 0, false};
        else if (v.is_float() && v.length() == 1)
          rn[(size_t)in.a] = {0, v.float1(), true};
        else
          return fail_guard(in.c, false);
        break;
      }
      case ROp::GNtoI: {
        if (vm.force_fail()) return fail_guard(in.c, true);
        const NumBox& n = rn[(size_t)in.b];
        if (n.is_f) return fail_guard(in.c, false);
        ri[(size_t)in.a] = n.i;
        break;
      }
      case ROp::GNtoF: {
        if (vm.force_fail()) return fail_guard(in.c, true);
        const NumBox& n = rn[(size_t)in.b];
        if (!n.is_f) return fail_guard(in.c, false);
        rf[(size_t)in.a] = n.f;
        break;
      }
      case ROp::FtoIt: {
        if (vm.force_fail()) return fail_guard(in.c, true);
        double d = rf[(size_t)in.b];
        if (!in_index_range(d)) return fail_guard(in.c, false);
        ri[(size_t)in.a] = (int64_t)d;
        break;
      }
      case ROp::NtoIt: {
        if (vm.force_fail()) return fail_guard(in.c, true);
        const NumBox& n = rn[(size_t)in.b];
        if (n.is_f) {
          if (!in_index_range(n.f)) return fail_guard(in.c, false);
          ri[(size_t)in.a] = (int64_t)n.f;
        } else {
          ri[(size_t)in.a] = n.i;
        }
        break;
      }
      case ROp::GVtoIdx: {
        if (vm.force_fail()) return fail_guard(in.c, true);
        try {
          ri[(size_t)in.a] = index_to_int(rv[(size_t)in.b]);
        } catch (const DlError&) {
          return fail_guard(in.c, false);
        }
        break;
      }

      case ROp::GuardT: {
        if (vm.force_fail()) return fail_guard(in.b, true);
        if (!subtype(type_of(rv[(size_t)in.a]),
                     p.guards[(size_t)in.b].expected))
          return fail_guard(in.b, false);
        break;
      }
      case ROp::GuardFn: {
        if (vm.force_fail()) return fail_guard(in.b, true);
        const Value& v = rv[(size_t)in.a];
        if (!v.is_closure() ||
            v.closure_ref().fn !=
                p.vconsts[(size_t)in.c].closure_ref().fn)
          return fail_guard(in.b, false);
        break;
      }
      case ROp::GuardTrue:
        if (vm.force_fail()) return fail_guard(in.b, true);
        if (ri[(size_t)in.a] == 0) return fail_guard(in.b, false);
        break;
      case ROp::GuardFalse:
        if (vm.force_fail()) return fail_guard(in.b, true);
        if (ri[(size_t)in.a] != 0) return fail_guard(in.b, false);
        break;
      case ROp::DeoptNow:
        return fail_guard(in.a, false);
      case ROp::Checkpoint:
        if (vm.checkpoint_hook &&
            vm.checkpoint_hook(p.src, p.exits[(size_t)in.a].bc_pc)) {
          DeoptReason r;
          r.kind = DeoptReasonKind::TypeGuardFail;
          r.site_pc = p.exits[(size_t)in.a].bc_pc;
          r.forced = true;
          return vm.handle_deopt(&cont, materialize(p.exits[(size_t)in.a]),
                                 r);
        }
        break;

      case ROp::AddI:
        ri[(size_t)in.a] = wrap_add(ri[(size_t)in.b], ri[(size_t)in.c]);
        break;
      case ROp::SubI:
        ri[(size_t)in.a] = wrap_sub(ri[(size_t)in.b], ri[(size_t)in.c]);
        break;
      case ROp::MulI:
        ri[(size_t)in.a] = wrap_mul(ri[(size_t)in.b], ri[(size_t)in.c]);
        break;
      case ROp::EqI:
        ri[(size_t)in.a] = ri[(size_t)in.b] == ri[(size_t)in.c];
        break;
      case ROp::LtI:
        ri[(size_t)in.a] = ri[(size_t)in.b] < ri[(size_t)in.c];
        break;
      case ROp::LeI:
        ri[(size_t)in.a] = ri[(size_t)in.b] <= ri[(size_t)in.c];
        break;
      case ROp::AddF:
        rf[(size_t)in.a] = rf[(size_t)in.b] + rf[(size_t)in.c];
        break;
      case ROp::SubF:
        rf[(size_t)in.a] = rf[(size_t)in.b] - rf[(size_t)in.c];
        break;
      case ROp::MulF:
        rf[(size_t)in.a] = rf[(size_t)in.b] * rf[(size_t)in.c];
        break;
      case ROp::DivF:
        rf[(size_t)in.a] = rf[(size_t)in.b] / rf[(size_t)in.c];
        break;
      case ROp::EqF:
        ri[(size_t)in.a] = rf[(size_t)in.b] == rf[(size_t)in.c];
        break;
      case ROp::LtF:
        ri[(size_t)in.a] = rf[(size_t)in.b] < rf[(size_t)in.c];
        break;
      case ROp::LeF:
        ri[(size_t)in.a] = rf[(size_t)in.b] <= rf[(size_t)in.c];
        break;

      case ROp::AddN: case ROp::SubN: case ROp::MulN: {
        const NumBox& x = rn[(size_t)in.b];
        const NumBox& y = rn[(size_t)in.c];
        NumBox out;
        if (x.is_f || y.is_f) {
          out.is_f = true;
          double a = x.as_f(), b = y.as_f();
          out.f = in.op == ROp::AddN ? a + b
                  : in.op == ROp::SubN ? a - b
                                       : a * b;
        } else {
          out.i = in.op == ROp::AddN ? wrap_add(x.i, y.i)
                  : in.op == ROp::SubN ? wrap_sub(x.i, y.i)
                                       : wrap_mul(x.i, y.i);
        }
        rn[(size_t)in.a] = out;
        break;
      }
      case ROp::DivN:
        rf[(size_t)in.a] =
            rn[(size_t)in.b].as_f() / rn[(size_t)in.c].as_f();
        break;
      case ROp::EqN: case ROp::LtN: case ROp::LeN: {
        const NumBox& x = rn[(size_t)in.b];
        const NumBox& y = rn[(size_t)in.c];
        bool res;
        if (!x.is_f && !y.is_f) {
          res = in.op == ROp::EqN ? x.i == y.i
                : in.op == ROp::LtN ? x.i < y.i
                                    : x.i <= y.i;
        } else {
          double a = x.as_f(), b = y.as_f();
          res = in.op == ROp::EqN ? a == b : in.op == ROp::LtN ? a < b : a <= b;
        }
        ri[(size_t)in.a] = res;
        break;
      }

      case ROp::AddV: case ROp::SubV: case ROp::MulV: case ROp::DivV:
      case ROp::EqV: case ROp::LtV: case ROp::LeV: {
        if (vm.force_fail()) return fail_guard(in.d, true);
        BinOp op;
        switch (in.op) {
          case ROp::AddV: op = BinOp::Add; break;
          case ROp::SubV: op = BinOp::Sub; break;
          case ROp::MulV: op = BinOp::Mul; break;
          case ROp::DivV: op = BinOp::Div; break;
          case ROp::EqV: op = BinOp::Eq; break;
          case ROp::LtV: op = BinOp::Lt; break;
          default: op = BinOp::Le; break;
        }
        try {
          rv[(size_t)in.a] = binop(op, rv[(size_t)in.b], rv[(size_t)in.c]);
        } catch (const DlError&) {
          return fail_guard(in.d, false);
        }
        break;
      }

      case ROp::IdxGetI: {
        if (vm.force_fail()) return fail_guard(in.d, true);
        const Value& v = rv[(size_t)in.b];
        int64_t i = ri[(size_t)in.c];
        if (i < 1 || i > (int64_t)v.ints().size())
          return fail_guard(in.d, false);
        ri[(size_t)in.a] = v.ints()[(size_t)(i - 1)];
        break;
      }
      case ROp::IdxGetF: {
        if (vm.force_fail()) return fail_guard(in.d, true);
        const Value& v = rv[(size_t)in.b];
        int64_t i = ri[(size_t)in.c];
        if (i < 1 || i > (int64_t)v.floats().size())
          return fail_guard(in.d, false);
        rf[(size_t)in.a] = v.floats()[(size_t)(i - 1)];
        break;
      }
      case ROp::IdxGetB: {
        if (vm.force_fail()) return fail_guard(in.d, true);
        const Value& v = rv[(size_t)in.b];
        int64_t i = ri[(size_t)in.c];
        if (i < 1 || i > (int64_t)v.bools().size())
          return fail_guard(in.d, false);
        ri[(size_t)in.a] = v.bools()[(size_t)(i - 1)] != 0;
        break;
      }
      case ROp::IdxGetG: {
        if (vm.force_fail()) return fail_guard(in.d, true);
        Value v = rv[(size_t)in.b];
        int64_t i = ri[(size_t)in.c];
        if (i < 1 || i > (int64_t)v.gens().size())
          return fail_guard(in.d, false);
        rv[(size_t)in.a] = v.gens()[(size_t)(i - 1)];
        break;
      }
      case ROp::IdxGetV: {
        if (vm.force_fail()) return fail_guard(in.d, true);
        Value v = rv[(size_t)in.b];
        try {
          rv[(size_t)in.a] = index_get1(v, ri[(size_t)in.c]);
        } catch (const DlError&) {
          return fail_guard(in.d, false);
        }
        break;
      }

      case ROp::IdxSetI: {
        if (vm.force_fail()) return fail_guard(in.d, true);
        Value& v = rv[(size_t)in.a];
        int64_t i = ri[(size_t)in.b];
        if (i < 1 || i > (int64_t)v.ints().size() + 1)
          return fail_guard(in.d, false);
        v.set_int_elem(i, ri[(size_t)in.c]);
        break;
      }
      case ROp::IdxSetF: {
        if (vm.force_fail()) return fail_guard(in.d, true);
        Value& v = rv[(size_t)in.a];
        int64_t i = ri[(size_t)in.b];
        if (i < 1 || i > (int64_t)v.floats().size() + 1)
          return fail_guard(in.d, false);
        v.set_float_elem(i, rf[(size_t)in.c]);
        break;
      }
      case ROp::IdxSetB: {
        if (vm.force_fail()) return fail_guard(in.d, true);
        Value& v = rv[(size_t)in.a];
        int64_t i = ri[(size_t)in.b];
        if (i < 1 || i > (int64_t)v.bools().size() + 1)
          return fail_guard(in.d, false);
        v.set_bool_elem(i, ri[(size_t)in.c] != 0);
        break;
      }
      case ROp::IdxSetG: {
        if (vm.force_fail()) return fail_guard(in.d, true);
        Value& v = rv[(size_t)in.a];
        int64_t i = ri[(size_t)in.b];
        if (i < 1 || i > (int64_t)v.gens().size() + 1)
          return fail_guard(in.d, false);
        v.set_gen_elem(i, rv[(size_t)in.c]);
        break;
      }
      case ROp::IdxSetV: {
        if (vm.force_fail()) return fail_guard(in.d, true);
        Value v = rv[(size_t)in.a];
        try {
          rv[(size_t)in.a] = index_set1(v, ri[(size_t)in.b], rv[(size_t)in.c]);
        } catch (const DlError&) {
          rv[(size_t)in.a] = std::move(v);
          return fail_guard(in.d, false);
        }
        break;
      }

      case ROp::LenV:
        ri[(size_t)in.a] = rv[(size_t)in.b].length();
        break;
      case ROp::MkVec: {
        std::vector<Value> parts(rv.begin() + in.b, rv.begin() + in.b + in.c);
        rv[(size_t)in.a] = concat(parts);
        break;
      }
      case ROp::PrintV:
        rv[(size_t)in.a].render(vm.out());
        vm.out() << "\n";
        break;

      case ROp::CallD:
        rv[(size_t)in.a] = call_out(p.callees[(size_t)in.b], in.c, in.d);
        break;
      case ROp::CallC: {
        const Value& callee = rv[(size_t)in.a];
        if (vm.cfg.debug_checks && !callee.is_closure())
          throw std::logic_error("dynamic call on a non-closure register");
        const BytecodeFunction* target = callee.closure_ref().fn;
        rv[(size_t)in.a] = call_out(target, in.b, in.c);
        break;
      }

      case ROp::Jmp:
        pc = in.a;
        continue;
      case ROp::Jz:
        if (ri[(size_t)in.a] == 0) {
          pc = in.b;
          continue;
        }
        break;
      case ROp::ForNext: {
        int64_t cur = wrap_add(ri[(size_t)in.a], 1);
        if (cur > ri[(size_t)in.b]) {
          pc = in.c;
          continue;
        }
        ri[(size_t)in.a] = cur;
        break;
      }
      case ROp::RetV:
        return rv[(size_t)in.a];
      case ROp::Nop:
        break;
    }
    pc++;
  }
}

}  // namespace dl
