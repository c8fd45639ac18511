// The deoptimization runtime: context construction and ordering, dispatch
// tables, the recompile heuristic, and feedback cleanup-and-inference. The
// repair pass is checked against an independent reimplementation of the
// taint and inference dataflow kept in this file.

#include "doctest.h"

#include <map>
#include <random>
#include <set>
#include <sstream>

#include "dl/harness.hpp"
#include "dl/parse.hpp"
#include "dl/progen.hpp"
#include "dl/typing.hpp"
#include "dl/vm.hpp"

using namespace dl;

namespace {

using enum TypeTag;

const TypeTag kAllTags[] = {IntScalar, IntVec,     FloatScalar, FloatVec,
                            NumScalar, NumVec,     BoolScalar,  BoolVec,
                            GenVec,    Closure,    Any};

DeoptContext base_ctx() {
  DeoptContext c;
  c.pc = 7;
  c.reason_kind = DeoptReasonKind::TypeGuardFail;
  c.reason_site = 3;
  c.reason_actual = FloatVec;
  return c;
}

// ---- independent reimplementation of the repair dataflow ----------------

// Taint: per slot, the set of feedback-site pcs the value passed through.
struct OracleTaint {
  using Set = std::set<int>;
  struct St {
    std::vector<Set> locals;
    std::vector<Set> stack;
    bool operator==(const St&) const = default;
  };
  const BytecodeFunction* fn;
  std::map<int, St> at;        // state on entry of pc
  std::map<int, Set> made;     // taint of the value a site produces

  static bool site(Opcode op) {
    switch (op) {
      case Opcode::LoadLocal:
      case Opcode::LoadGlobal:
      case Opcode::BinOp:
      case Opcode::IndexGet:
      case Opcode::Call:
        return true;
      default:
        return false;
    }
  }

  explicit OracleTaint(const BytecodeFunction* f) : fn(f) {
    St init;
    init.locals.resize((size_t)f->nlocals());
    std::set<int> work;
    auto join = [](St& into, const St& from) {
      bool changed = false;
      for (size_t i = 0; i < into.locals.size(); i++)
        for (int s : from.locals[i])
          changed |= into.locals[i].insert(s).second;
      for (size_t i = 0; i < into.stack.size(); i++)
        for (int s : from.stack[i]) changed |= into.stack[i].insert(s).second;
      return changed;
    };
    auto send = [&](int pc, const St& st) {
      if (pc < 0 || pc >= (int)fn->code.size()) return;
      auto it = at.find(pc);
      if (it == at.end()) {
        at.emplace(pc, st);
        work.insert(pc);
      } else if (join(it->second, st)) {
        work.insert(pc);
      }
    };
    send(0, init);
    while (!work.empty()) {
      int pc = *work.begin();
      work.erase(work.begin());
      St st = at.at(pc);
      const Instr& ins = fn->code[(size_t)pc];
      auto pop = [&] {
        Set s = st.stack.back();
        st.stack.pop_back();
        return s;
      };
      auto push = [&](Set s) {
        if (site(ins.op)) {
          s.insert(pc);
          for (int x : s) made[pc].insert(x);
        }
        st.stack.push_back(std::move(s));
      };
      bool next = true;
      switch (ins.op) {
        case Opcode::LoadConst: push({}); break;
        case Opcode::LoadLocal: push(st.locals[(size_t)ins.a]); break;
        case Opcode::StoreLocal: st.locals[(size_t)ins.a] = pop(); break;
        case Opcode::LoadGlobal: push({}); break;
        case Opcode::StoreGlobal: pop(); break;
        case Opcode::Call: {
          Set all;
          for (int i = 0; i <= ins.a; i++)
            for (int x : pop()) all.insert(x);
          push(all);
          break;
        }
        case Opcode::BinOp:
        case Opcode::IndexGet: {
          Set rhs = pop(), lhs = pop();
          lhs.insert(rhs.begin(), rhs.end());
          push(lhs);
          break;
        }
        case Opcode::IndexSet: {
          Set x = pop(), i = pop();
          auto& l = st.locals[(size_t)ins.a];
          l.insert(x.begin(), x.end());
          l.insert(i.begin(), i.end());
          break;
        }
        case Opcode::IndexSetV: {
          Set x = pop(), i = pop(), v = pop();
          v.insert(x.begin(), x.end());
          v.insert(i.begin(), i.end());
          push(v);
          break;
        }
        case Opcode::MakeVec: {
          Set all;
          for (int i = 0; i < ins.a; i++)
            for (int x : pop()) all.insert(x);
          push(all);
          break;
        }
        case Opcode::Length: push(pop()); break;
        case Opcode::Print: break;
        case Opcode::Pop: pop(); break;
        case Opcode::Branch:
          send(pc + 1 + ins.a, st);
          next = false;
          break;
        case Opcode::BranchIfFalse:
          pop();
          send(pc + 1 + ins.a, st);
          break;
        case Opcode::ForSeqInit: {
          Set hi = pop();
          st.locals[(size_t)ins.a] = pop();
          st.stack.push_back(hi);
          break;
        }
        case Opcode::ForSeqNext: {
          St exit = st;
          exit.stack.pop_back();
          send(pc + 1 + ins.b, exit);
          break;
        }
        case Opcode::Return: next = false; break;
      }
      if (next) send(pc + 1, st);
    }
  }
};

// Forward type inference with the same trust rule: sites yield their profiled
// tag when the record is seen and not stale, the typing rules otherwise.
void oracle_infer(const BytecodeFunction* fn, FeedbackStore& fb) {
  struct St {
    std::vector<TypeTag> locals;
    std::vector<TypeTag> stack;
  };
  std::map<int, St> at;
  std::map<int, TypeTag> inferred;
  std::set<int> work;
  auto join = [](St& into, const St& from) {
    bool changed = false;
    for (size_t i = 0; i < into.locals.size(); i++) {
      TypeTag t = lub(into.locals[i], from.locals[i]);
      if (t != into.locals[i]) into.locals[i] = t, changed = true;
    }
    for (size_t i = 0; i < into.stack.size(); i++) {
      TypeTag t = lub(into.stack[i], from.stack[i]);
      if (t != into.stack[i]) into.stack[i] = t, changed = true;
    }
    return changed;
  };
  auto send = [&](int pc, const St& st) {
    if (pc < 0 || pc >= (int)fn->code.size()) return;
    auto it = at.find(pc);
    if (it == at.end()) {
      at.emplace(pc, st);
      work.insert(pc);
    } else if (join(it->second, st)) {
      work.insert(pc);
    }
  };
  St init;
  init.locals.assign((size_t)fn->nlocals(), Any);
  send(0, init);
  while (!work.empty()) {
    int pc = *work.begin();
    work.erase(work.begin());
    St st = at.at(pc);
    const Instr& ins = fn->code[(size_t)pc];
    auto pop = [&] {
      TypeTag t = st.stack.back();
      st.stack.pop_back();
      return t;
    };
    auto yield = [&](TypeTag computed) {
      auto it = inferred.find(pc);
      inferred[pc] = it == inferred.end() ? computed : lub(it->second, computed);
      const TypeRecord* r = fb.type_at(pc);
      st.stack.push_back(r && r->seen && !r->stale ? r->tag : computed);
    };
    bool next = true;
    switch (ins.op) {
      case Opcode::LoadConst:
        st.stack.push_back(type_of(fn->consts[(size_t)ins.a]));
        break;
      case Opcode::LoadLocal: yield(st.locals[(size_t)ins.a]); break;
      case Opcode::StoreLocal: st.locals[(size_t)ins.a] = pop(); break;
      case Opcode::LoadGlobal: yield(Any); break;
      case Opcode::StoreGlobal: pop(); break;
      case Opcode::Call: {
        for (int i = 0; i <= ins.a; i++) pop();
        yield(Any);
        break;
      }
      case Opcode::BinOp: {
        TypeTag b = pop(), a = pop();
        yield(binop_type((BinOp)ins.a, a, b));
        break;
      }
      case Opcode::IndexGet: {
        pop();
        yield(index_get_type(pop()));
        break;
      }
      case Opcode::IndexSet: {
        TypeTag x = pop();
        pop();
        st.locals[(size_t)ins.a] =
            index_set_type(st.locals[(size_t)ins.a], x);
        break;
      }
      case Opcode::IndexSetV: {
        TypeTag x = pop();
        pop();
        TypeTag v = pop();
        st.stack.push_back(index_set_type(v, x));
        break;
      }
      case Opcode::MakeVec: {
        std::vector<TypeTag> parts(st.stack.end() - ins.a, st.stack.end());
        st.stack.resize(st.stack.size() - (size_t)ins.a);
        st.stack.push_back(concat_type(parts));
        break;
      }
      case Opcode::Length:
        pop();
        st.stack.push_back(IntScalar);
        break;
      case Opcode::Print: break;
      case Opcode::Pop: pop(); break;
      case Opcode::Branch:
        send(pc + 1 + ins.a, st);
        next = false;
        break;
      case Opcode::BranchIfFalse:
        pop();
        send(pc + 1 + ins.a, st);
        break;
      case Opcode::ForSeqInit:
        pop();
        pop();
        st.locals[(size_t)ins.a] = IntScalar;
        st.stack.push_back(IntScalar);
        break;
      case Opcode::ForSeqNext: {
        St exit = st;
        exit.stack.pop_back();
        send(pc + 1 + ins.b, exit);
        break;
      }
      case Opcode::Return:
        pop();
        next = false;
        break;
    }
    if (next) send(pc + 1, st);
  }
  for (auto& [pc, rec] : fb.types) {
    if (!rec.stale) continue;
    auto it = inferred.find(pc);
    if (it == inferred.end() || it->second == Any) continue;
    rec.tag = it->second;
    rec.seen = true;
    rec.stale = false;
  }
}

// Returns the set of sites marked stale at any point during the repair
// (whether or not inference later refilled them).
std::set<int> oracle_repair(const BytecodeFunction* fn, FeedbackStore& fb,
                            const DeoptContext& ctx, const FrameState& fs) {
  OracleTaint taint(fn);
  int site = ctx.reason_site;
  std::set<int> staled;
  auto made_has = [&](int pc, int s) {
    auto it = taint.made.find(pc);
    return it != taint.made.end() && it->second.count(s) > 0;
  };

  if (site >= 0 && site < (int)fn->code.size()) {
    if (auto it = fb.types.find(site); it != fb.types.end()) {
      it->second.stale = true;
      staled.insert(site);
    }
    fb.calls.erase(site);
    for (auto& [pc, rec] : fb.types)
      if (pc != site && made_has(pc, site)) {
        rec.stale = true;
        staled.insert(pc);
      }
    for (auto it = fb.calls.begin(); it != fb.calls.end();)
      it = (it->first != site && made_has(it->first, site))
               ? fb.calls.erase(it)
               : std::next(it);
    for (auto it = fb.branches.begin(); it != fb.branches.end();) {
      auto st = taint.at.find(it->first);
      bool dep = st != taint.at.end() && !st->second.stack.empty() &&
                 st->second.stack.back().count(site) > 0;
      it = dep ? fb.branches.erase(it) : std::next(it);
    }
  }

  auto st = taint.at.find(fs.pc);
  if (st != taint.at.end()) {
    auto contradict = [&](const std::set<int>& sources, const Value& v) {
      TypeTag live = type_of(v);
      for (int pc : sources) {
        auto it = fb.types.find(pc);
        if (it != fb.types.end() && it->second.seen &&
            !subtype(live, it->second.tag)) {
          it->second.stale = true;
          staled.insert(pc);
        }
      }
    };
    const auto& live = st->second;
    for (size_t l = 0; l < fs.locals.size() && l < live.locals.size(); l++)
      if (fs.locals[l]) contradict(live.locals[l], *fs.locals[l]);
    for (size_t i = 0; i < fs.stack.size() && i < live.stack.size(); i++)
      contradict(live.stack[i], fs.stack[i]);
  }

  if (site >= 0) {
    switch (ctx.reason_kind) {
      case DeoptReasonKind::TypeGuardFail: {
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
        BranchRecord& b = fb.branches[site];
        uint64_t t = b.total();
        b.taken = b.not_taken = t / 2 + 1;
        break;
      }
      default:
        break;
    }
  }

  oracle_infer(fn, fb);
  return staled;
}

bool same_feedback(const FeedbackStore& a, const FeedbackStore& b) {
  if (a.types.size() != b.types.size()) return false;
  for (const auto& [pc, r] : a.types) {
    const TypeRecord* o = b.type_at(pc);
    if (!o || o->tag != r.tag || o->seen != r.seen || o->stale != r.stale)
      return false;
  }
  if (a.branches.size() != b.branches.size()) return false;
  for (const auto& [pc, r] : a.branches) {
    const BranchRecord* o = b.branch_at(pc);
    if (!o || o->taken != r.taken || o->not_taken != r.not_taken) return false;
  }
  if (a.calls.size() != b.calls.size()) return false;
  for (const auto& [pc, r] : a.calls) {
    const CallRecord* o = b.call_at(pc);
    if (!o || o->megamorphic != r.megamorphic || o->targets != r.targets)
      return false;
  }
  return true;
}

int find_op(const BytecodeFunction& f, Opcode op, int nth = 0) {
  for (size_t pc = 0; pc < f.code.size(); pc++)
    if (f.code[pc].op == op && nth-- == 0) return (int)pc;
  return -1;
}

struct Profiled {
  LoweredProgram prog;
  Vm vm;
  const BytecodeFunction* fn;

  Profiled(const std::string& src, const std::string& name)
      : prog(lower(parse(src))), vm([] {
          VmConfig cfg;
          cfg.jit = false;
          return cfg;
        }()),
        fn(nullptr) {
    std::ostringstream sink;
    vm.cfg.out = &sink;
    vm.run_main(prog);
    fn = prog.find(name);
    REQUIRE(fn != nullptr);
  }
};

}  // namespace

// ---- contexts -----------------------------------------------------------

TEST_CASE("compute_ctx captures pc, reason and live types in order") {
  Profiled p(
      "sum <- function() {\n"
      "  total <- 0\n"
      "  for (i in 1:length) total <- total + data[[i]]\n"
      "  total\n"
      "}\n"
      "length <- 3\ndata <- c(1, 2, 3)\nsum()\n",
      "sum");
  FrameState fs;
  fs.fn = p.fn;
  fs.pc = 4;
  fs.stack = {Value::int_scalar(3)};
  fs.locals.assign((size_t)p.fn->nlocals(), std::nullopt);
  fs.locals[(size_t)p.fn->local_index("total")] = Value::float_scalar(15.0);
  DeoptReason r;
  r.kind = DeoptReasonKind::TypeGuardFail;
  r.site_pc = 9;
  r.actual = FloatVec;
  r.forced = true;  // the context still carries the real kind
  DeoptContext c = compute_ctx(fs, r);
  CHECK(c.pc == 4);
  CHECK(c.reason_kind == DeoptReasonKind::TypeGuardFail);
  CHECK(c.reason_site == 9);
  CHECK(c.reason_actual == FloatVec);
  REQUIRE(c.stack_size() == 1);
  CHECK(c.stack[0] == IntScalar);
  // Only assigned locals appear, in local-table order.
  REQUIRE(c.env_size() == 1);
  CHECK(c.env[0].first == "total");
  CHECK(c.env[0].second == FloatScalar);
}

TEST_CASE("ctx_leq: brute force over every small context") {
  // All contexts sharing pc/site with ≤1 stack slot and ≤1 env slot; the
  // slot tags and the reason tag range over the full lattice.
  std::vector<DeoptContext> all;
  for (TypeTag actual : kAllTags) {
    for (int ns = 0; ns <= 1; ns++) {
      for (int ne = 0; ne <= 1; ne++) {
        for (TypeTag s : kAllTags) {
          if (ns == 0 && s != IntScalar) continue;  // dedupe unused axis
          for (TypeTag e : kAllTags) {
            if (ne == 0 && e != IntScalar) continue;
            DeoptContext c = base_ctx();
            c.reason_actual = actual;
            if (ns) c.stack.push_back(s);
            if (ne) c.env.emplace_back("x", e);
            all.push_back(std::move(c));
          }
        }
      }
    }
  }
  size_t n = all.size();
  std::vector<std::vector<bool>> le(n, std::vector<bool>(n));
  for (size_t i = 0; i < n; i++)
    for (size_t j = 0; j < n; j++) le[i][j] = ctx_leq(all[i], all[j]);
  for (size_t i = 0; i < n; i++) CHECK(le[i][i]);
  int antisym_pairs = 0;
  for (size_t i = 0; i < n; i++)
    for (size_t j = 0; j < n; j++) {
      if (i != j && le[i][j] && le[j][i]) antisym_pairs++;
    }
  CHECK(antisym_pairs == 0);
  // Transitivity over all chains i ≤ j ≤ k.
  int violations = 0;
  for (size_t j = 0; j < n; j++)
    for (size_t i = 0; i < n; i++) {
      if (!le[i][j]) continue;
      for (size_t k = 0; k < n; k++)
        if (le[j][k] && !le[i][k]) violations++;
    }
  CHECK(violations == 0);
}

TEST_CASE("ctx_leq: property test over random context triples") {
  std::mt19937_64 rng(20240817);
  auto rand_tag = [&] { return kAllTags[rng() % 11]; };
  auto rand_ctx = [&](int pc, int stack_n, int env_n) {
    DeoptContext c = base_ctx();
    c.pc = pc;
    c.reason_actual = rand_tag();
    for (int i = 0; i < stack_n; i++) c.stack.push_back(rand_tag());
    for (int i = 0; i < env_n; i++)
      c.env.emplace_back(std::string(1, (char)('a' + i)), rand_tag());
    return c;
  };
  int leq_seen = 0;
  for (int iter = 0; iter < 110000; iter++) {
    int pc = (int)(rng() % 2);
    int sn = (int)(rng() % 3);
    int en = (int)(rng() % 3);
    DeoptContext a = rand_ctx(pc, sn, en);
    DeoptContext b = rand_ctx(pc, sn, en);
    DeoptContext c = rand_ctx(pc, sn, en);
    if (ctx_leq(a, b) && ctx_leq(b, c)) {
      leq_seen++;
      REQUIRE(ctx_leq(a, c));
    }
    REQUIRE(ctx_leq(a, a));
    if (ctx_leq(a, b) && ctx_leq(b, a)) {
      REQUIRE(a.reason_actual == b.reason_actual);
      REQUIRE(a.stack == b.stack);
      REQUIRE(a.env == b.env);
    }
  }
  CHECK(leq_seen > 0);  // the property was actually exercised
}

TEST_CASE("ctx_leq examples: widening, reasons, and pc separation") {
  DeoptContext a = base_ctx();
  a.env.emplace_back("total", IntScalar);
  DeoptContext b = base_ctx();
  b.env.emplace_back("total", NumScalar);
  CHECK(ctx_leq(a, b));
  CHECK_FALSE(ctx_leq(b, a));

  DeoptContext fs_scalar = base_ctx();
  fs_scalar.reason_actual = FloatScalar;
  DeoptContext fs_vec = base_ctx();
  fs_vec.reason_actual = FloatVec;
  CHECK(ctx_leq(fs_scalar, fs_vec));

  DeoptContext other_pc = base_ctx();
  other_pc.pc = 8;
  CHECK_FALSE(ctx_leq(base_ctx(), other_pc));
  CHECK_FALSE(ctx_leq(other_pc, base_ctx()));

  DeoptContext call = base_ctx();
  call.reason_kind = DeoptReasonKind::CallTargetFail;
  CHECK_FALSE(ctx_leq(call, base_ctx()));
  CHECK_FALSE(ctx_leq(base_ctx(), call));
}

TEST_CASE("specificity counts typed slots plus lattice depth") {
  DeoptContext c = base_ctx();
  CHECK(ctx_specificity(c) == 0);  // no slots at all
  c.stack.push_back(Any);
  CHECK(ctx_specificity(c) == 0);  // Any contributes nothing
  c.stack.push_back(IntScalar);    // 1 typed slot + depth 3
  CHECK(ctx_specificity(c) == 4);
  c.env.emplace_back("x", NumVec);  // 1 typed slot + depth 1
  CHECK(ctx_specificity(c) == 6);
  // Monotone: narrowing any slot never lowers specificity.
  DeoptContext wide = base_ctx();
  wide.env.emplace_back("x", NumVec);
  DeoptContext narrow = base_ctx();
  narrow.env.emplace_back("x", IntScalar);
  CHECK(ctx_specificity(narrow) > ctx_specificity(wide));
}

TEST_CASE("digest is stable and separates different contexts") {
  DeoptContext a = base_ctx();
  a.env.emplace_back("total", IntScalar);
  CHECK(ctx_digest(a) == ctx_digest(a));
  CHECK(ctx_digest(a).size() == 16);
  DeoptContext b = a;
  b.env[0].second = FloatScalar;
  CHECK(ctx_digest(a) != ctx_digest(b));
  DeoptContext c = a;
  c.env[0].first = "other";
  CHECK(ctx_digest(a) != ctx_digest(c));
}

// ---- tables, dispatch, recompilation ------------------------------------

TEST_CASE("insert_sorted keeps specificity order with insertion tiebreak") {
  ContinuationTable table;
  auto mk = [&](TypeTag env_tag) {
    DeoptContext c = base_ctx();
    c.env.emplace_back("x", env_tag);
    table.insert_sorted(c, std::make_unique<Continuation>());
  };
  mk(NumVec);      // specificity 2
  mk(IntScalar);   // specificity 4 -> sorts first
  mk(FloatVec);    // specificity 3
  mk(Any);         // specificity 0 -> last
  REQUIRE(table.entries.size() == 4);
  CHECK(table.entries[0].ctx.env[0].second == IntScalar);
  CHECK(table.entries[1].ctx.env[0].second == FloatVec);
  CHECK(table.entries[2].ctx.env[0].second == NumVec);
  CHECK(table.entries[3].ctx.env[0].second == Any);
  // Equal specificity: earlier insertion stays in front.
  ContinuationTable t2;
  DeoptContext c1 = base_ctx();
  c1.env.emplace_back("x", IntScalar);
  DeoptContext c2 = base_ctx();
  c2.env.emplace_back("x", FloatScalar);  // same depth, same score
  REQUIRE(ctx_specificity(c1) == ctx_specificity(c2));
  t2.insert_sorted(c1, std::make_unique<Continuation>());
  t2.insert_sorted(c2, std::make_unique<Continuation>());
  CHECK(t2.entries[0].ctx.env[0].second == IntScalar);
  CHECK(t2.entries[0].insertion < t2.entries[1].insertion);
  CHECK_FALSE(t2.full(5));
  CHECK(t2.full(2));
}

TEST_CASE("dispatch returns the first implied entry, skipping retired") {
  Vm vm;
  ContinuationTable table;
  auto add = [&](TypeTag env_tag) {
    DeoptContext c = base_ctx();
    c.env.emplace_back("x", env_tag);
    table.insert_sorted(c, std::make_unique<Continuation>());
  };
  add(FloatScalar);  // most specific, but incompatible with ints
  add(NumScalar);
  add(NumVec);

  DeoptContext live = base_ctx();
  live.env.emplace_back("x", IntScalar);
  Continuation* hit = dispatch(vm, table, live);
  REQUIRE(hit != nullptr);
  // The float entry is incomparable; the NumScalar one is the first match
  // in linearization order (more specific than NumVec).
  const DeoptContext* key = nullptr;
  for (auto& e : table.entries)
    if (e.cont.get() == hit) key = &e.ctx;
  REQUIRE(key);
  CHECK(key->env[0].second == NumScalar);
  // Retire it: dispatch falls through to the next compatible entry.
  hit->retired = true;
  Continuation* second = dispatch(vm, table, live);
  REQUIRE(second != nullptr);
  for (auto& e : table.entries)
    if (e.cont.get() == second) key = &e.ctx;
  CHECK(key->env[0].second == NumVec);

  DeoptContext bools = base_ctx();
  bools.env.emplace_back("x", BoolScalar);
  CHECK(dispatch(vm, table, bools) == nullptr);
}

TEST_CASE("dispatch result is minimal among matches under linearization") {
  // Brute-force cross-check of the scan: whatever dispatch returns must be
  // the first entry (in table order) whose key the live context implies.
  Vm vm;
  std::mt19937_64 rng(7);
  auto rand_tag = [&] { return kAllTags[rng() % 11]; };
  for (int round = 0; round < 200; round++) {
    ContinuationTable table;
    for (int i = 0; i < 5; i++) {
      DeoptContext c = base_ctx();
      c.env.emplace_back("x", rand_tag());
      c.env.emplace_back("y", rand_tag());
      table.insert_sorted(c, std::make_unique<Continuation>());
    }
    DeoptContext live = base_ctx();
    live.env.emplace_back("x", rand_tag());
    live.env.emplace_back("y", rand_tag());
    Continuation* got = dispatch(vm, table, live);
    Continuation* expect = nullptr;
    for (auto& e : table.entries)
      if (ctx_leq(live, e.ctx)) {
        expect = e.cont.get();
        break;
      }
    CHECK(got == expect);
  }
}

TEST_CASE("recompile heuristic: strict majority of tighter slots") {
  ContinuationTable table;
  DeoptContext generic = base_ctx();
  generic.env.emplace_back("x", NumScalar);
  generic.env.emplace_back("y", NumScalar);
  auto cont = std::make_unique<Continuation>();
  cont->compiled_for = generic;
  Continuation* matched = cont.get();
  table.insert_sorted(generic, std::move(cont));

  DeoptContext exact = generic;
  CHECK_FALSE(recompile_heuristic(table, 5, *matched, exact));

  DeoptContext tighter = base_ctx();
  tighter.env.emplace_back("x", IntScalar);
  tighter.env.emplace_back("y", IntScalar);
  CHECK(recompile_heuristic(table, 5, *matched, tighter));

  DeoptContext half = base_ctx();
  half.env.emplace_back("x", IntScalar);
  half.env.emplace_back("y", NumScalar);
  // Exactly half strict is not a strict majority.
  CHECK_FALSE(recompile_heuristic(table, 5, *matched, half));

  // A full table never recompiles, however specific the state is.
  CHECK_FALSE(recompile_heuristic(table, 1, *matched, tighter));

  // Whole-function code (no compiled-for context) is never "too generic".
  Continuation entry_code;
  CHECK_FALSE(recompile_heuristic(table, 5, entry_code, tighter));
}

TEST_CASE("bounded table: the sixth incomparable context true-deopts") {
  Profiled p(
      "h <- function(n) {\n"
      "  x <- 0\n"
      "  y <- 0\n"
      "  s <- 0\n"
      "  for (i in 1:n) s <- s + i\n"
      "  s\n"
      "}\n"
      "h(3)\nh(3)\n",
      "h");
  Vm& vm = p.vm;
  vm.cfg.jit = true;
  vm.cfg.deoptless = true;

  // A mid-loop, depth-1 resume point: the first loop-body instruction.
  std::vector<int> depths = stack_depths(*p.fn);
  int s_local = p.fn->local_index("s");
  int pc = -1;
  for (size_t i = 0; i < p.fn->code.size(); i++)
    if (p.fn->code[i].op == Opcode::LoadLocal &&
        p.fn->code[i].a == s_local && depths[i] == 1) {
      pc = (int)i;  // the `s` read in the loop body, loop bound beneath
      break;
    }
  REQUIRE(pc >= 0);

  auto frame = [&](Value x, Value y) {
    FrameState fs;
    fs.fn = p.fn;
    fs.pc = pc;
    fs.stack = {Value::int_scalar(3)};  // loop bound
    fs.locals.assign((size_t)p.fn->nlocals(), std::nullopt);
    fs.locals[(size_t)p.fn->local_index("x")] = std::move(x);
    fs.locals[(size_t)p.fn->local_index("y")] = std::move(y);
    fs.locals[(size_t)p.fn->local_index("s")] = Value::int_scalar(0);
    fs.locals[(size_t)p.fn->local_index("i")] = Value::int_scalar(1);
    fs.locals[(size_t)p.fn->local_index("n")] = Value::int_scalar(3);
    return fs;
  };
  DeoptReason r;
  r.kind = DeoptReasonKind::TypeGuardFail;
  r.site_pc = find_op(*p.fn, Opcode::BinOp);
  r.actual = IntScalar;

  // Six pairwise-incomparable contexts, varied through two dead locals.
  Value I = Value::int_scalar(1);
  Value F = Value::float_scalar(1.0);
  Value B = Value::bool_scalar(true);
  std::vector<std::pair<Value, Value>> combos = {
      {I, F}, {F, I}, {I, B}, {B, I}, {F, B}, {B, F}};
  for (size_t k = 0; k < combos.size(); k++) {
    Value out = vm.handle_deopt(nullptr, frame(combos[k].first,
                                               combos[k].second), r);
    // Resuming at i=1, s=0, n=3 always sums 1+2+3.
    CHECK(out.render() == "int[6]");
  }
  ContinuationTable& table = vm.state(p.fn).tables[pc];
  CHECK(table.entries.size() == 5);
  CHECK(vm.stats.deoptless_compile == 5);
  CHECK(vm.stats.deoptless_hit == 0);
  CHECK(vm.stats.true_deopt == 1);  // only the sixth fell through
  CHECK(vm.stats.deopt_count == 6);

  // A seventh state compatible with an existing entry dispatches instead.
  Value out = vm.handle_deopt(nullptr, frame(I, F), r);
  CHECK(out.render() == "int[6]");
  CHECK(vm.stats.deoptless_hit == 1);
  CHECK(table.entries.size() == 5);
}

// ---- feedback repair vs the independent oracle --------------------------

TEST_CASE("repair agrees with the oracle on the sum kernel") {
  Profiled p(
      "sum <- function() {\n"
      "  total <- 0\n"
      "  for (i in 1:length) total <- total + data[[i]]\n"
      "  total\n"
      "}\n"
      "length <- 5\ndata <- c(1, 2, 3, 4, 5)\nsum()\nsum()\n",
      "sum");
  int get_site = find_op(*p.fn, Opcode::IndexGet);
  REQUIRE(get_site >= 0);

  FrameState fs;
  fs.fn = p.fn;
  fs.pc = get_site;
  fs.locals.assign((size_t)p.fn->nlocals(), std::nullopt);
  fs.locals[(size_t)p.fn->local_index("total")] = Value::float_scalar(7.5);
  fs.locals[(size_t)p.fn->local_index("i")] = Value::int_scalar(3);

  DeoptContext ctx = compute_ctx(fs, [&] {
    DeoptReason r;
    r.kind = DeoptReasonKind::TypeGuardFail;
    r.site_pc = get_site;
    r.actual = FloatScalar;
    return r;
  }());

  FeedbackStore expected = p.vm.state(p.fn).feedback;  // copy, pre-repair
  std::set<int> staled = oracle_repair(p.fn, expected, ctx, fs);
  feedback_repair(p.vm, ctx, fs);
  const FeedbackStore& got = p.vm.state(p.fn).feedback;
  CHECK(same_feedback(got, expected));

  // The paper-level outcome: the element site now says float, and the add
  // site was re-inferred below NumScalar instead of staying int.
  const TypeRecord* elem = got.type_at(get_site);
  REQUIRE(elem);
  CHECK(elem->monomorphic());
  CHECK(elem->tag == FloatScalar);
  int add = find_op(*p.fn, Opcode::BinOp);
  const TypeRecord* sum_rec = got.type_at(add);
  REQUIRE(sum_rec);
  CHECK(sum_rec->monomorphic());
  CHECK(subtype(sum_rec->tag, NumScalar));
  CHECK(sum_rec->tag != IntScalar);

  // Post-cleanup consistency: every record the repair left untouched (not
  // stale-marked, hence not refilled) still admits the live values that
  // flowed from it.
  OracleTaint taint(p.fn);
  auto live = taint.at.find(fs.pc);
  REQUIRE(live != taint.at.end());
  for (size_t l = 0; l < fs.locals.size(); l++) {
    if (!fs.locals[l]) continue;
    for (int src : live->second.locals[l]) {
      if (staled.count(src)) continue;
      const TypeRecord* rec = got.type_at(src);
      if (rec && rec->monomorphic())
        CHECK(subtype(type_of(*fs.locals[l]), rec->tag));
    }
  }
}

TEST_CASE("repair erases dependent branch and call records") {
  Profiled p(
      "g <- function(a) { a }\n"
      "f <- function() {\n"
      "  x <- data[[1]]\n"
      "  y <- 0\n"
      "  z <- 0\n"
      "  if (x < 5) y <- g(x) else y <- 1\n"
      "  if (y < 10) z <- 1 else z <- 2\n"
      "  other <- steady[[1]]\n"
      "  y + z + other\n"
      "}\n"
      "data <- c(2)\nsteady <- c(10)\nf()\nf()\nf()\n",
      "f");
  int site = find_op(*p.fn, Opcode::IndexGet);  // the data[[1]] read
  REQUIRE(site >= 0);
  const FeedbackStore& before = p.vm.state(p.fn).feedback;
  REQUIRE(before.branches.size() == 2);
  REQUIRE(before.calls.size() == 1);

  FrameState fs;
  fs.fn = p.fn;
  fs.pc = site;
  fs.locals.assign((size_t)p.fn->nlocals(), std::nullopt);
  DeoptContext ctx;
  ctx.pc = site;
  ctx.reason_kind = DeoptReasonKind::TypeGuardFail;
  ctx.reason_site = site;
  ctx.reason_actual = FloatScalar;

  FeedbackStore expected = before;
  oracle_repair(p.fn, expected, ctx, fs);
  feedback_repair(p.vm, ctx, fs);
  const FeedbackStore& got = p.vm.state(p.fn).feedback;
  CHECK(same_feedback(got, expected));

  // The branch on x and the call g(x) depended on the failing site; the
  // second branch depends on y which flows from the call, so it goes too.
  CHECK(got.calls.empty());
  CHECK(got.branches.empty());
  // The unrelated read of `steady` keeps its record.
  int steady_site = find_op(*p.fn, Opcode::IndexGet, 1);
  REQUIRE(steady_site >= 0);
  const TypeRecord* steady = got.type_at(steady_site);
  REQUIRE(steady);
  CHECK(steady->monomorphic());
  CHECK(steady->tag == IntScalar);
}

TEST_CASE("repair injections for call targets and pruned branches") {
  Profiled p(
      "g <- function(a) { a }\n"
      "f <- function(n) {\n"
      "  t <- 0\n"
      "  if (n < 100) t <- t + 1 else t <- t - 1\n"
      "  g(t)\n"
      "}\n"
      "f(1)\nf(2)\nf(3)\n",
      "f");
  const BytecodeFunction* g = p.prog.find("g");
  int call_site = find_op(*p.fn, Opcode::Call);
  int branch_site = find_op(*p.fn, Opcode::BranchIfFalse);
  REQUIRE(call_site >= 0);
  REQUIRE(branch_site >= 0);

  FrameState fs;
  fs.fn = p.fn;
  fs.pc = 0;
  fs.locals.assign((size_t)p.fn->nlocals(), std::nullopt);

  SUBCASE("a new call target is recorded at the site") {
    DeoptContext ctx;
    ctx.pc = 0;
    ctx.reason_kind = DeoptReasonKind::CallTargetFail;
    ctx.reason_site = call_site;
    ctx.reason_callee = p.fn;  // pretend a different callee showed up
    FeedbackStore expected = p.vm.state(p.fn).feedback;
    oracle_repair(p.fn, expected, ctx, fs);
    feedback_repair(p.vm, ctx, fs);
    const FeedbackStore& got = p.vm.state(p.fn).feedback;
    CHECK(same_feedback(got, expected));
    const CallRecord* rec = got.call_at(call_site);
    REQUIRE(rec);
    // The record was wiped by the cleanup, then reseeded with the observed
    // callee only.
    CHECK(rec->targets == std::vector<const BytecodeFunction*>{p.fn});
    (void)g;
  }

  SUBCASE("a disproven branch prune rebalances the counters") {
    DeoptContext ctx;
    ctx.pc = 0;
    ctx.reason_kind = DeoptReasonKind::BranchPruneFail;
    ctx.reason_site = branch_site;
    FeedbackStore expected = p.vm.state(p.fn).feedback;
    uint64_t before_total = expected.branch_at(branch_site)->total();
    REQUIRE(before_total == 3);
    oracle_repair(p.fn, expected, ctx, fs);
    feedback_repair(p.vm, ctx, fs);
    const FeedbackStore& got = p.vm.state(p.fn).feedback;
    CHECK(same_feedback(got, expected));
    const BranchRecord* b = got.branch_at(branch_site);
    REQUIRE(b);
    CHECK(b->taken == b->not_taken);
    CHECK(b->taken == before_total / 2 + 1);
  }
}

TEST_CASE("repair agrees with the oracle across the generated corpus") {
  // Randomized cross-validation: profile a generated program, then repair
  // from a synthetic failure at every feedback site of every function.
  std::mt19937_64 rng(99);
  for (uint64_t seed = 1; seed <= 12; seed++) {
    CAPTURE(seed);
    std::string src = generate_program(seed);
    LoweredProgram prog = lower(parse(src));
    VmConfig cfg;
    cfg.jit = false;
    Vm vm(cfg);
    std::ostringstream sink;
    vm.cfg.out = &sink;
    vm.run_main(prog);
    for (const auto& fn : prog.fns) {
      FeedbackStore& live = vm.state(fn.get()).feedback;
      if (live.types.empty()) continue;
      std::vector<int> sites;
      for (auto& [pc, rec] : live.types) sites.push_back(pc);
      for (int site : sites) {
        DeoptContext ctx;
        ctx.pc = 0;
        ctx.reason_kind = DeoptReasonKind::TypeGuardFail;
        ctx.reason_site = site;
        ctx.reason_actual = kAllTags[rng() % 9];  // no Closure/Any injects
        FrameState fs;
        fs.fn = fn.get();
        fs.pc = 0;
        fs.locals.assign((size_t)fn->nlocals(), std::nullopt);
        FeedbackStore expected = live;
        oracle_repair(fn.get(), expected, ctx, fs);
        feedback_repair(vm, ctx, fs);
        CAPTURE(fn->name);
        CAPTURE(site);
        REQUIRE(same_feedback(live, expected));
      }
    }
  }
}

TEST_CASE("forced failures leave feedback untouched and code alive") {
  std::string src =
      "sum <- function() {\n"
      "  total <- 0\n"
      "  for (i in 1:length) total <- total + data[[i]]\n"
      "  total\n"
      "}\n"
      "length <- 5\ndata <- c(1, 2, 3, 4, 5)\n"
      "for (r in 1:5) sum()\n";
  LoweredProgram prog = lower(parse(src));
  VmConfig cfg;
  cfg.inv_threshold = 2;
  Vm vm(cfg);
  std::ostringstream sink;
  vm.cfg.out = &sink;
  vm.run_main(prog);
  const BytecodeFunction* sum = prog.find("sum");
  REQUIRE(vm.state(sum).compiled != nullptr);
  FeedbackStore snapshot = vm.state(sum).feedback;

  FrameState fs;
  fs.fn = sum;
  fs.pc = 0;
  fs.locals.assign((size_t)sum->nlocals(), std::nullopt);
  DeoptReason r;
  r.kind = DeoptReasonKind::TypeGuardFail;
  r.site_pc = find_op(*sum, Opcode::IndexGet);
  r.actual = FloatVec;
  r.forced = true;
  Value v = vm.handle_deopt(nullptr, fs, r);
  CHECK(v.render() == "int[15]");
  CHECK(same_feedback(vm.state(sum).feedback, snapshot));
  CHECK(vm.state(sum).compiled != nullptr);
  CHECK_FALSE(vm.state(sum).compiled->retired);
}
