#include <algorithm>
#include <chrono>
#include <cstdio>
#include <deque>

#include "dl/typing.hpp"
#include "dl/vm.hpp"

namespace dl {

const char* deopt_reason_name(DeoptReasonKind k) {
  switch (k) {
    case DeoptReasonKind::TypeGuardFail: return "type-guard";
    case DeoptReasonKind::CallTargetFail: return "call-target";
    case DeoptReasonKind::BranchPruneFail: return "branch-prune";
    case DeoptReasonKind::GlobalInvalidated: return "global-invalidated";
    case DeoptReasonKind::EnvLeaked: return "env-leaked";
    case DeoptReasonKind::ForcedTest: return "forced-test";
  }
  return "?";
}

// ---- deopt contexts -----------------------------------------------------

DeoptContext compute_ctx(const FrameState& fs, const DeoptReason& r) {
  DeoptContext c;
  c.pc = fs.pc;
  // The real kind, not ForcedTest: a forced failure dispatches over the same
  // tables as the genuine failure it simulates.
  c.reason_kind = r.kind;
  c.reason_site = r.site_pc;
  c.reason_actual = r.actual;
  c.reason_callee = r.actual_callee;
  for (const Value& v : fs.stack) c.stack.push_back(type_of(v));
  for (size_t l = 0; l < fs.locals.size(); l++)
    if (fs.locals[l])
      c.env.emplace_back(fs.fn->locals[l], type_of(*fs.locals[l]));
  return c;
}

bool ctx_leq(const DeoptContext& a, const DeoptContext& b) {
  if (a.pc != b.pc) return false;
  if (a.reason_kind != b.reason_kind || a.reason_site != b.reason_site)
    return false;
  if (a.reason_kind == DeoptReasonKind::TypeGuardFail &&
      !subtype(a.reason_actual, b.reason_actual))
    return false;
  if (a.reason_kind == DeoptReasonKind::CallTargetFail &&
      a.reason_callee != b.reason_callee)
    return false;
  if (a.stack.size() != b.stack.size() || a.env.size() != b.env.size())
    return false;
  for (size_t i = 0; i < a.stack.size(); i++)
    if (!subtype(a.stack[i], b.stack[i])) return false;
  for (size_t i = 0; i < a.env.size(); i++) {
    if (a.env[i].first != b.env[i].first) return false;
    if (!subtype(a.env[i].second, b.env[i].second)) return false;
  }
  return true;
}

int ctx_specificity(const DeoptContext& c) {
  int s = 0;
  auto add = [&](TypeTag t) {
    if (t != TypeTag::Any) s++;
    s += lattice_depth(t);
  };
  for (TypeTag t : c.stack) add(t);
  for (const auto& e : c.env) add(e.second);
  return s;
}

std::string ctx_digest(const DeoptContext& c) {
  uint64_t h = 1469598103934665603ull;  // FNV-1a 64 offset basis
  auto mix = [&](const void* data, size_t n) {
    const unsigned char* p = (const unsigned char*)data;
    for (size_t i = 0; i < n; i++) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  auto mix_int = [&](int64_t v) { mix(&v, sizeof v); };
  mix_int(c.pc);
  mix_int((int64_t)c.reason_kind);
  mix_int(c.reason_site);
  mix_int((int64_t)c.reason_actual);
  if (c.reason_callee) mix(c.reason_callee->name.data(),
                           c.reason_callee->name.size());
  for (TypeTag t : c.stack) mix_int((int64_t)t);
  for (const auto& e : c.env) {
    mix(e.first.data(), e.first.size());
    mix_int((int64_t)e.second);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

// ---- continuation tables ------------------------------------------------

void ContinuationTable::insert_sorted(DeoptContext ctx,
                                      std::unique_ptr<Continuation> cont) {
  ContEntry e{std::move(ctx), std::move(cont), next_insertion++};
  int spec = ctx_specificity(e.ctx);
  auto pos = std::find_if(entries.begin(), entries.end(),
                          [&](const ContEntry& x) {
                            int xs = ctx_specificity(x.ctx);
                            return spec > xs ||
                                   (spec == xs && e.insertion < x.insertion);
                          });
  entries.insert(pos, std::move(e));
}

Continuation* dispatch(Vm& vm, ContinuationTable& table,
                       const DeoptContext& ctx) {
  for (ContEntry& e : table.entries) {
    if (e.cont->retired) continue;
    if (!vm.deps_valid(*e.cont)) continue;
    if (ctx_leq(ctx, e.ctx)) return e.cont.get();
  }
  return nullptr;
}

bool recompile_heuristic(const ContinuationTable& table, int bound,
                         const Continuation& matched,
                         const DeoptContext& ctx) {
  if (table.full(bound)) return false;
  if (!matched.compiled_for) return false;
  const DeoptContext& m = *matched.compiled_for;
  if (m.stack.size() != ctx.stack.size() || m.env.size() != ctx.env.size())
    return false;
  int total = 0, strict = 0;
  auto cmp = [&](TypeTag cur, TypeTag was) {
    total++;
    if (cur != was && subtype(cur, was)) strict++;
  };
  for (size_t i = 0; i < ctx.stack.size(); i++) cmp(ctx.stack[i], m.stack[i]);
  for (size_t i = 0; i < ctx.env.size(); i++)
    cmp(ctx.env[i].second, m.env[i].second);
  return total > 0 && strict * 2 > total;
}

// ---- feedback cleanup and inference ------------------------------------

namespace {

// Which values a slot was derived from, as the set of feedback-site pcs the
// value passed through. Sets are small; sorted vectors keep merges cheap.
using Taint = std::vector<int>;

bool taint_add(Taint& d, int pc) {
  auto it = std::lower_bound(d.begin(), d.end(), pc);
  if (it != d.end() && *it == pc) return false;
  d.insert(it, pc);
  return true;
}

bool taint_union(Taint& d, const Taint& s) {
  bool ch = false;
  for (int pc : s) ch |= taint_add(d, pc);
  return ch;
}

bool taint_has(const Taint& t, int pc) {
  return std::binary_search(t.begin(), t.end(), pc);
}

struct TaintState {
  std::vector<Taint> locals;
  std::vector<Taint> stack;
};

// Forward dataflow over the bytecode tracking, per local and stack slot,
// the set of feedback sites the value flowed through. `produced[pc]` is the
// taint of the value a site produces (its inputs plus the site itself);
// `in[pc]` the state on entry to pc.
struct TaintAnalysis {
  const BytecodeFunction* fn;
  std::vector<std::optional<TaintState>> in;
  std::vector<Taint> produced;

  explicit TaintAnalysis(const BytecodeFunction* f) : fn(f) { run(); }

  static bool is_site(Opcode op) {
    return op == Opcode::LoadLocal || op == Opcode::LoadGlobal ||
           op == Opcode::BinOp || op == Opcode::IndexGet ||
           op == Opcode::Call;
  }

  void run() {
    size_t n = fn->code.size();
    in.resize(n);
    produced.resize(n);
    TaintState entry;
    entry.locals.resize((size_t)fn->nlocals());
    in[0] = entry;
    std::deque<int> work{0};

    auto merge = [](TaintState& d, const TaintState& s) {
      bool ch = false;
      for (size_t i = 0; i < d.locals.size(); i++)
        ch |= taint_union(d.locals[i], s.locals[i]);
      for (size_t i = 0; i < d.stack.size(); i++)
        ch |= taint_union(d.stack[i], s.stack[i]);
      return ch;
    };
    auto flow = [&](int target, const TaintState& st) {
      if (target < 0 || target >= (int)n) return;
      if (!in[(size_t)target]) {
        in[(size_t)target] = st;
        work.push_back(target);
      } else if (merge(*in[(size_t)target], st)) {
        work.push_back(target);
      }
    };

    while (!work.empty()) {
      int pc = work.front();
      work.pop_front();
      TaintState st = *in[(size_t)pc];
      const Instr& ins = fn->code[(size_t)pc];
      auto pop = [&]() {
        Taint t = std::move(st.stack.back());
        st.stack.pop_back();
        return t;
      };
      auto push = [&](Taint t) {
        if (is_site(ins.op)) {
          taint_add(t, pc);
          taint_union(produced[(size_t)pc], t);
        }
        st.stack.push_back(std::move(t));
      };
      bool falls = true;
      switch (ins.op) {
        case Opcode::LoadConst: push({}); break;
        case Opcode::LoadLocal: push(st.locals[(size_t)ins.a]); break;
        case Opcode::StoreLocal: st.locals[(size_t)ins.a] = pop(); break;
        case Opcode::LoadGlobal: push({}); break;
        case Opcode::StoreGlobal: pop(); break;
        case Opcode::Call: {
          Taint t;
          for (int i = 0; i < ins.a + 1; i++) taint_union(t, pop());
          push(std::move(t));
          break;
        }
        case Opcode::BinOp: {
          Taint b = pop(), a = pop();
          taint_union(a, b);
          push(std::move(a));
          break;
        }
        case Opcode::IndexGet: {
          Taint i = pop(), v = pop();
          taint_union(v, i);
          push(std::move(v));
          break;
        }
        case Opcode::IndexSet: {
          Taint x = pop(), i = pop();
          Taint& l = st.locals[(size_t)ins.a];
          taint_union(l, i);
          taint_union(l, x);
          break;
        }
        case Opcode::IndexSetV: {
          Taint x = pop(), i = pop(), v = pop();
          taint_union(v, i);
          taint_union(v, x);
          push(std::move(v));
          break;
        }
        case Opcode::MakeVec: {
          Taint t;
          for (int i = 0; i < ins.a; i++) taint_union(t, pop());
          push(std::move(t));
          break;
        }
        case Opcode::Length: push(pop()); break;
        case Opcode::Print: break;
        case Opcode::Pop: pop(); break;
        case Opcode::Branch:
          flow(pc + 1 + ins.a, st);
          falls = false;
          break;
        case Opcode::BranchIfFalse:
          pop();
          flow(pc + 1 + ins.a, st);
          break;
        case Opcode::ForSeqInit: {
          Taint hi = pop(), lo = pop();
          st.locals[(size_t)ins.a] = std::move(lo);
          st.stack.push_back(std::move(hi));
          break;
        }
        case Opcode::ForSeqNext: {
          TaintState ex = st;
          ex.stack.pop_back();
          flow(pc + 1 + ins.b, ex);
          break;
        }
        case Opcode::Return:
          falls = false;
          break;
      }
      if (falls) flow(pc + 1, st);
    }
  }
};

// Forward type inference over the bytecode, reading non-stale records at
// feedback sites and typing rules elsewhere. `inferred[pc]` accumulates the
// lub of the result type a site can produce from its (repaired) inputs.
void infer_and_fill(const BytecodeFunction* fn, FeedbackStore& fb) {
  struct InferState {
    std::vector<TypeTag> locals;  // Any when unknown/unset
    std::vector<TypeTag> stack;
  };
  size_t n = fn->code.size();
  std::vector<std::optional<InferState>> states(n);
  std::vector<std::optional<TypeTag>> inferred(n);
  InferState entry;
  entry.locals.assign((size_t)fn->nlocals(), TypeTag::Any);
  states[0] = entry;
  std::deque<int> work{0};

  auto merge = [](InferState& d, const InferState& s) {
    bool ch = false;
    for (size_t i = 0; i < d.locals.size(); i++) {
      TypeTag t = lub(d.locals[i], s.locals[i]);
      if (t != d.locals[i]) d.locals[i] = t, ch = true;
    }
    for (size_t i = 0; i < d.stack.size(); i++) {
      TypeTag t = lub(d.stack[i], s.stack[i]);
      if (t != d.stack[i]) d.stack[i] = t, ch = true;
    }
    return ch;
  };

  while (!work.empty()) {
    int pc = work.front();
    work.pop_front();
    InferState st = *states[(size_t)pc];
    const Instr& ins = fn->code[(size_t)pc];
    std::vector<int> succ;
    auto push = [&](TypeTag t) { st.stack.push_back(t); };
    auto pop = [&]() {
      TypeTag t = st.stack.back();
      st.stack.pop_back();
      return t;
    };
    // The value a site yields downstream: the profiled tag when the record
    // is trustworthy, otherwise what the typing rules say.
    auto note = [&](TypeTag computed) {
      auto& slot = inferred[(size_t)pc];
      slot = slot ? lub(*slot, computed) : computed;
      const TypeRecord* r = fb.type_at(pc);
      return r && r->monomorphic() ? r->tag : computed;
    };
    switch (ins.op) {
      case Opcode::LoadConst: push(type_of(fn->consts[(size_t)ins.a])); break;
      case Opcode::LoadLocal: push(note(st.locals[(size_t)ins.a])); break;
      case Opcode::StoreLocal: st.locals[(size_t)ins.a] = pop(); break;
      case Opcode::LoadGlobal: push(note(TypeTag::Any)); break;
      case Opcode::StoreGlobal: pop(); break;
      case Opcode::Call: {
        for (int i = 0; i < ins.a + 1; i++) pop();
        push(note(TypeTag::Any));
        break;
      }
      case Opcode::BinOp: {
        TypeTag b = pop();
        TypeTag a = pop();
        push(note(binop_type((BinOp)ins.a, a, b)));
        break;
      }
      case Opcode::IndexGet: {
        pop();
        TypeTag v = pop();
        push(note(index_get_type(v)));
        break;
      }
      case Opcode::IndexSet: {
        TypeTag x = pop();
        pop();
        st.locals[(size_t)ins.a] = index_set_type(st.locals[(size_t)ins.a], x);
        break;
      }
      case Opcode::IndexSetV: {
        TypeTag x = pop();
        pop();
        TypeTag v = pop();
        push(index_set_type(v, x));
        break;
      }
      case Opcode::MakeVec: {
        std::vector<TypeTag> parts(st.stack.end() - ins.a, st.stack.end());
        st.stack.resize(st.stack.size() - (size_t)ins.a);
        push(concat_type(parts));
        break;
      }
      case Opcode::Length: pop(); push(TypeTag::IntScalar); break;
      case Opcode::Print: break;
      case Opcode::Pop: pop(); break;
      case Opcode::Branch: succ.push_back(pc + 1 + ins.a); break;
      case Opcode::BranchIfFalse:
        pop();
        succ.push_back(pc + 1 + ins.a);
        break;
      case Opcode::ForSeqInit:
        pop();
        pop();
        st.locals[(size_t)ins.a] = TypeTag::IntScalar;
        push(TypeTag::IntScalar);
        break;
      case Opcode::ForSeqNext: {
        InferState ex = st;
        ex.stack.pop_back();
        int t = pc + 1 + ins.b;
        if (!states[(size_t)t]) {
          states[(size_t)t] = ex;
          work.push_back(t);
        } else if (merge(*states[(size_t)t], ex)) {
          work.push_back(t);
        }
        break;
      }
      case Opcode::Return:
        pop();
        continue;  // no successors
    }
    if (ins.op != Opcode::Branch) succ.push_back(pc + 1);
    for (int s : succ) {
      if (s < 0 || s >= (int)n) continue;
      if (!states[(size_t)s]) {
        states[(size_t)s] = st;
        work.push_back(s);
      } else if (merge(*states[(size_t)s], st)) {
        work.push_back(s);
      }
    }
  }

  // Fill in the blanks: a stale record takes the inferred result type of its
  // inputs. Any carries no information, so such sites stay blank.
  for (auto& [pc, rec] : fb.types) {
    if (!rec.stale) continue;
    if (pc < 0 || pc >= (int)n) continue;
    const auto& t = inferred[(size_t)pc];
    if (!t || *t == TypeTag::Any) continue;
    rec.tag = *t;
    rec.seen = true;
    rec.stale = false;
  }
}

}  // namespace

void feedback_repair(Vm& vm, const DeoptContext& ctx, const FrameState& fs) {
  const BytecodeFunction* fn = fs.fn;
  FeedbackStore& fb = vm.state(fn).feedback;
  TaintAnalysis taint(fn);
  int site = ctx.reason_site;

  // 1. The failing site's record is no longer trustworthy, and neither is
  //    any record a value from that site flowed into.
  if (site >= 0 && site < (int)fn->code.size()) {
    if (auto it = fb.types.find(site); it != fb.types.end())
      it->second.stale = true;
    fb.calls.erase(site);
    for (auto& [pc, rec] : fb.types)
      if (pc != site && taint_has(taint.produced[(size_t)pc], site))
        rec.stale = true;
    for (auto it = fb.calls.begin(); it != fb.calls.end();)
      it = it->first != site &&
                   taint_has(taint.produced[(size_t)it->first], site)
               ? fb.calls.erase(it)
               : std::next(it);
    for (auto it = fb.branches.begin(); it != fb.branches.end();) {
      const auto& st = taint.in[(size_t)it->first];
      bool dep = st && !st->stack.empty() &&
                 taint_has(st->stack.back(), site);
      it = dep ? fb.branches.erase(it) : std::next(it);
    }
  }

  // 2. Check the rest against the live frame: a record whose tag does not
  //    admit a live value that flowed from it is stale too.
  if (fs.pc >= 0 && fs.pc < (int)fn->code.size() &&
      taint.in[(size_t)fs.pc]) {
    const TaintState& live = *taint.in[(size_t)fs.pc];
    auto contradict = [&](const Taint& t, const Value& v) {
      TypeTag tag = type_of(v);
      for (int pc : t) {
        auto it = fb.types.find(pc);
        if (it != fb.types.end() && it->second.seen &&
            !subtype(tag, it->second.tag))
          it->second.stale = true;
      }
    };
    for (size_t l = 0; l < fs.locals.size() && l < live.locals.size(); l++)
      if (fs.locals[l]) contradict(live.locals[l], *fs.locals[l]);
    for (size_t i = 0; i < fs.stack.size() && i < live.stack.size(); i++)
      contradict(live.stack[i], fs.stack[i]);
  }

  // 3. Inject the observed fact at the failing site so recompilation does
  //    not repeat the speculation.
  if (site >= 0) {
    switch (ctx.reason_kind) {
      case DeoptReasonKind::TypeGuardFail: {
        // The site was proven wrong and marked stale above; the observed
        // type replaces it outright so recompilation specializes for what
        // is actually flowing, not the union with the disproven history.
        TypeRecord& r = fb.types[site];
        r.tag = ctx.reason_actual;
        r.seen = true;
        r.stale = false;
        break;
      }
      case DeoptReasonKind::CallTargetFail:
        if (ctx.reason_callee) fb.record_call(site, ctx.reason_callee);
        break;
      case DeoptReasonKind::BranchPruneFail: {
        // The pruned direction happened: rebalance the record so the branch
        // no longer looks one-sided.
        BranchRecord& b = fb.branches[site];
        uint64_t t = b.total();
        b.taken = b.not_taken = t / 2 + 1;
        break;
      }
      default:
        break;
    }
  }

  // 4. Forward inference over the non-stale records and the injected fact
  //    refills the stale sites.
  infer_and_fill(fn, fb);
}

// ---- the deopt runtime --------------------------------------------------

bool Vm::deps_valid(Continuation& c) {
  for (const auto& d : c.prog.deps) {
    GlobalCell* cell = global_cell(d.first);
    if (cell->version != d.second) {
      c.retired = true;
      return false;
    }
  }
  return true;
}

Value Vm::deoptless_path(Continuation* origin, const FrameState& fs,
                         const DeoptReason& r, bool& handled) {
  handled = false;
  DeoptReasonKind k = r.effective_kind();
  if (k == DeoptReasonKind::EnvLeaked ||
      k == DeoptReasonKind::GlobalInvalidated)
    return Value();
  if (fs.next) return Value();
  // One level only: a guard failing inside a deoptless continuation falls
  // back to the baseline rather than chaining.
  if (origin && origin->compiled_for) return Value();
  if ((int)fs.stack.size() > cfg.ctx_max_stack) return Value();

  DeoptContext ctx = compute_ctx(fs, r);
  if (ctx.env_size() > cfg.ctx_max_env) return Value();

  FunctionState& st = state(fs.fn);
  ContinuationTable& table = st.tables[fs.pc];

  auto run = [&](Continuation& cont) {
    cont.use_count++;
    bool saved = in_deoptless;
    in_deoptless = true;
    Value v;
    try {
      v = optexec_execute(*this, cont, fs.stack, fs.locals);
    } catch (...) {
      in_deoptless = saved;
      throw;
    }
    in_deoptless = saved;
    return v;
  };

  Continuation* match = dispatch(*this, table, ctx);
  if (match && !recompile_heuristic(table, cfg.deoptless_max, *match, ctx)) {
    stats.deoptless_hit++;
    if (tracing(kTraceDeopt)) {
      int slot = 0;
      for (size_t i = 0; i < table.entries.size(); i++)
        if (table.entries[i].cont.get() == match) slot = (int)i;
      tout() << "[deoptless-hit] ctx=" << ctx_digest(ctx) << " slot=" << slot
             << "\n";
    }
    handled = true;
    return run(*match);
  }

  if (table.full(cfg.deoptless_max)) return Value();

  if (!r.forced) feedback_repair(*this, ctx, fs);

  TranslateRequest req;
  req.fn = fs.fn;
  req.entry_pc = fs.pc;
  for (const Value& v : fs.stack) req.seed_stack.push_back(type_of(v));
  for (const auto& l : fs.locals)
    req.seed_locals.push_back(l ? std::optional<TypeTag>(type_of(*l))
                                : std::nullopt);
  req.trusted = true;
  req.received_env = true;

  std::unique_ptr<Continuation> cont;
  auto t0 = std::chrono::steady_clock::now();
  try {
    IRFunction ir = translate(*this, req, st.feedback);
    optimize(ir, {cfg.unsafe_dse});
    cont = emit(std::move(ir));
  } catch (const CompileUnsupported&) {
    return Value();
  }
  auto dt = std::chrono::steady_clock::now() - t0;
  stats.compile_ns += (uint64_t)std::chrono::duration_cast<
                          std::chrono::nanoseconds>(dt)
                          .count();
  stats.compile_count++;
  stats.deoptless_compile++;
  cont->compiled_for = ctx;
  if (tracing(kTraceDeopt))
    tout() << "[deoptless-compile] ctx=" << ctx_digest(ctx) << " ms="
           << std::chrono::duration_cast<std::chrono::duration<double,
                                                               std::milli>>(
                  dt)
                  .count()
           << "\n";
  Continuation* fresh = cont.get();
  table.insert_sorted(std::move(ctx), std::move(cont));
  handled = true;
  return run(*fresh);
}

Value Vm::handle_deopt(Continuation* origin, const FrameState& fs,
                       const DeoptReason& r) {
  stats.deopt_count++;
  if (tracing(kTraceDeopt))
    tout() << "[deopt] fn=" << fs.fn->name << " pc=" << fs.pc
           << " reason=" << deopt_reason_name(r.effective_kind())
           << " actual=" << tag_name(r.actual) << "\n";

  if (cfg.deoptless) {
    bool handled = false;
    Value v = deoptless_path(origin, fs, r, handled);
    if (handled) return v;
  }

  stats.true_deopt++;
  if (!r.forced) {
    feedback_repair(*this, compute_ctx(fs, r), fs);
    FunctionState& st = state(fs.fn);
    // Throw away the speculatively compiled code; fresh feedback will drive
    // a recompilation once the function is hot again.
    if (st.compiled) {
      st.compiled->retired = true;
      retire(std::move(st.compiled));
    }
    st.pending_full_compile = false;
    st.inv_count = 0;
    st.edge_count = 0;
    if (origin && origin->compiled_for) origin->retired = true;
  }
  return resume(fs);
}

}  // namespace dl
