#include <cassert>
#include <chrono>

#include "dl/vm.hpp"

namespace dl {

namespace {

[[noreturn]] void bad_condition(const Value& v) {
  throw TypeError("condition must be a boolean scalar, got " +
                  std::string(tag_name(type_of(v))));
}

void record_type(Vm& vm, const BytecodeFunction* fn, FeedbackStore& fb, int pc,
                 const Value& v) {
  TypeTag t = type_of(v);
  TypeRecord& r = fb.types[pc];
  TypeTag before = r.tag;
  bool had = r.seen;
  r.record(t);
  if (vm.tracing(kTraceFeedback) && (!had || before != r.tag))
    vm.tout() << "[feedback] fn=" << fn->name << " pc=" << pc
              << " type=" << tag_name(r.tag) << "\n";
}

// Attempts OSR-in at a loop back-edge. Returns true and stores the function
// result in `result` when the compiled continuation ran.
bool try_osr_in(Vm& vm, const BytecodeFunction* fn, int target_pc,
                std::vector<Value>& stack,
                std::vector<std::optional<Value>>& locals, Value& result) {
  FunctionState& st = vm.state(fn);
  TranslateRequest req;
  req.fn = fn;
  req.entry_pc = target_pc;
  for (const Value& v : stack) req.seed_stack.push_back(type_of(v));
  for (const auto& l : locals)
    req.seed_locals.push_back(l ? std::optional<TypeTag>(type_of(*l))
                                : std::nullopt);
  req.trusted = true;
  req.received_env = true;

  std::unique_ptr<Continuation> cont;
  auto t0 = std::chrono::steady_clock::now();
  try {
    IRFunction ir = translate(vm, req, st.feedback);
    optimize(ir, {vm.cfg.unsafe_dse});
    cont = emit(std::move(ir));
  } catch (const CompileUnsupported&) {
    return false;
  }
  vm.stats.compile_ns += (uint64_t)std::chrono::duration_cast<
                             std::chrono::nanoseconds>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
  vm.stats.compile_count++;
  vm.stats.osr_in_count++;
  if (vm.tracing(kTraceOsr))
    vm.tout() << "[osr-in] fn=" << fn->name << " pc=" << target_pc << "\n";
  // One-shot: the continuation is dropped after this invocation; the next
  // call of the function compiles from entry instead.
  st.pending_full_compile = true;
  result = optexec_execute(vm, *cont, std::move(stack), std::move(locals));
  return true;
}

}  // namespace

Value interp_execute(Vm& vm, const BytecodeFunction* fn, int pc,
                     std::vector<Value> stack,
                     std::vector<std::optional<Value>> locals,
                     bool allow_osr) {
  FunctionState& st = vm.state(fn);
  FeedbackStore& fb = st.feedback;
  locals.resize((size_t)fn->nlocals());
  const std::vector<Instr>& code = fn->code;

  auto pop = [&stack]() {
    Value v = std::move(stack.back());
    stack.pop_back();
    return v;
  };

  while (true) {
    assert(pc >= 0 && pc < (int)code.size());
    const Instr& in = code[(size_t)pc];
    switch (in.op) {
      case Opcode::LoadConst:
        stack.push_back(fn->consts[(size_t)in.a]);
        break;
      case Opcode::LoadLocal: {
        const auto& l = locals[(size_t)in.a];
        if (!l) throw MissingError(fn->locals[(size_t)in.a]);
        stack.push_back(*l);
        record_type(vm, fn, fb, pc, *l);
        break;
      }
      case Opcode::StoreLocal:
        locals[(size_t)in.a] = pop();
        break;
      case Opcode::LoadGlobal: {
        GlobalCell* cell = vm.global_cell(fn->global_names[(size_t)in.a]);
        if (!cell->value) throw MissingError(cell->name);
        stack.push_back(*cell->value);
        record_type(vm, fn, fb, pc, *cell->value);
        break;
      }
      case Opcode::StoreGlobal:
        vm.set_global(fn->global_names[(size_t)in.a], pop());
        break;
      case Opcode::Call: {
        int n = in.a;
        const Value& callee = stack[stack.size() - 1 - (size_t)n];
        if (!callee.is_closure())
          throw TypeError("attempt to call a non-function value of type " +
                          std::string(tag_name(type_of(callee))));
        const BytecodeFunction* target = callee.closure_ref().fn;
        fb.record_call(pc, target);
        std::vector<Value> args(stack.end() - n, stack.end());
        stack.resize(stack.size() - (size_t)n - 1);
        Value res = vm.call(target, std::move(args));
        record_type(vm, fn, fb, pc, res);
        stack.push_back(std::move(res));
        break;
      }
      case Opcode::BinOp: {
        Value rhs = pop();
        Value lhs = pop();
        Value res = binop((BinOp)in.a, lhs, rhs);
        record_type(vm, fn, fb, pc, res);
        stack.push_back(std::move(res));
        break;
      }
      case Opcode::IndexGet: {
        Value idx = pop();
        Value vec = pop();
        Value res = index_get(vec, idx);
        record_type(vm, fn, fb, pc, res);
        stack.push_back(std::move(res));
        break;
      }
      case Opcode::IndexSet: {
        Value val = pop();
        Value idx = pop();
        auto& l = locals[(size_t)in.a];
        if (!l) throw MissingError(fn->locals[(size_t)in.a]);
        int64_t i = index_to_int(idx);
        Value updated = index_set1(*l, i, val);
        l = std::move(updated);
        break;
      }
      case Opcode::IndexSetV: {
        Value val = pop();
        Value idx = pop();
        Value vec = pop();
        stack.push_back(index_set(vec, idx, val));
        break;
      }
      case Opcode::MakeVec: {
        std::vector<Value> parts(stack.end() - in.a, stack.end());
        stack.resize(stack.size() - (size_t)in.a);
        stack.push_back(concat(parts));
        break;
      }
      case Opcode::Length: {
        Value v = pop();
        stack.push_back(Value::int_scalar(v.length()));
        break;
      }
      case Opcode::Print:
        stack.back().render(vm.out());
        vm.out() << "\n";
        break;
      case Opcode::Pop:
        stack.pop_back();
        break;
      case Opcode::Branch: {
        if (in.a < 0 && allow_osr && vm.cfg.jit && vm.cfg.osr_in &&
            vm.cfg.edge_threshold >= 0 && fn->id != 0) {
          FunctionState& s = vm.state(fn);
          if ((int64_t)++s.edge_count > (int64_t)vm.cfg.edge_threshold) {
            s.edge_count = 0;
            Value result;
            if (try_osr_in(vm, fn, pc + 1 + in.a, stack, locals, result))
              return result;
          }
        }
        pc += in.a;
        break;
      }
      case Opcode::BranchIfFalse: {
        Value cond = pop();
        if (!cond.is_bool() || cond.length() != 1) bad_condition(cond);
        bool jump = !cond.bool1();
        fb.record_branch(pc, jump);
        if (jump) pc += in.a;
        break;
      }
      case Opcode::ForSeqInit: {
        Value hi = pop();
        Value lo = pop();
        if (!lo.is_int() || lo.length() != 1 || !hi.is_int() ||
            hi.length() != 1)
          throw TypeError("for range endpoints must be integer scalars");
        locals[(size_t)in.a] = Value::int_scalar(wrap_sub(lo.int1(), 1));
        stack.push_back(std::move(hi));
        break;
      }
      case Opcode::ForSeqNext: {
        // The body may have rebound the loop variable to a non-integer.
        const Value& lv = *locals[(size_t)in.a];
        if (!lv.is_int() || !lv.is_scalar())
          throw TypeError("for loop variable " +
                          fn->locals[(size_t)in.a] +
                          " must be an integer scalar");
        int64_t hi = stack.back().int1();
        int64_t cur = wrap_add(lv.int1(), 1);
        if (cur > hi) {
          stack.pop_back();
          pc += in.b;
        } else {
          locals[(size_t)in.a] = Value::int_scalar(cur);
        }
        break;
      }
      case Opcode::Return:
        return pop();
    }
    pc++;
  }
}

Value Vm::resume(const FrameState& fs) {
  if (cfg.debug_checks) {
    if (fs.pc < 0 || fs.pc >= (int)fs.fn->code.size())
      throw std::logic_error("resume: pc out of range");
    std::vector<int> depths = stack_depths(*fs.fn);
    if ((int)fs.stack.size() != depths[(size_t)fs.pc])
      throw std::logic_error("resume: stack depth mismatch at pc " +
                             std::to_string(fs.pc));
    if ((int)fs.locals.size() > fs.fn->nlocals())
      throw std::logic_error("resume: too many locals");
  }
  return interp_execute(*this, fs.fn, fs.pc, fs.stack, fs.locals,
                        /*allow_osr=*/false);
}

}  // namespace dl
