// The optimizing pipeline: translation under type feedback, the structural
// checkpoint verifier, declined units, and differential runs of the compiled
// tier against the interpreter.

#include "doctest.h"

#include <string>

#include "dl/harness.hpp"
#include "dl/parse.hpp"
#include "dl/progen.hpp"
#include "dl/vm.hpp"

using namespace dl;

namespace {

const char* kSumProgram =
    "sum <- function() {\n"
    "  total <- 0\n"
    "  for (i in 1:length) total <- total + data[[i]]\n"
    "  total\n"
    "}\n"
    "length <- 10\ndata <- c(1,2,3,4,5,6,7,8,9,10)\n"
    "for (r in 1:3) sum()\n";

struct Compiled {
  LoweredProgram prog;
  Vm vm;
  const BytecodeFunction* fn = nullptr;
  IRFunction ir;

  Compiled(const std::string& src, const std::string& fname)
      : prog(lower(parse(src))), vm([] {
          VmConfig cfg;
          cfg.jit = false;  // interpret only, to gather clean feedback
          return cfg;
        }()) {
    vm.run_main(prog);
    fn = prog.find(fname);
    REQUIRE(fn != nullptr);
    TranslateRequest req;
    req.fn = fn;
    req.entry_pc = 0;
    req.seed_locals.assign((size_t)fn->nlocals(), std::nullopt);
    for (int32_t p : fn->param_locals)
      req.seed_locals[(size_t)p] = TypeTag::Any;
    ir = translate(vm, req, vm.state(fn).feedback);
  }
};

int count_rop(const IRFunction& ir, ROp op) {
  int n = 0;
  for (const RInstr& i : ir.code)
    if (i.op == op) n++;
  return n;
}

}  // namespace

TEST_CASE("int feedback produces an unboxed integer loop") {
  Compiled c(kSumProgram, "sum");
  // The hot add runs on the i64 file, not through the generic fallback.
  CHECK(count_rop(c.ir, ROp::AddI) >= 1);
  CHECK(count_rop(c.ir, ROp::AddV) == 0);
  // Speculation on the global's element type means at least one guard.
  CHECK_FALSE(c.ir.guards.empty());
  CHECK_FALSE(c.ir.exits.empty());
  CHECK(verify_checkpoints(c.ir).empty());
  optimize(c.ir);
  CHECK(verify_checkpoints(c.ir).empty());
  std::string dump = dump_ir(c.ir);
  CHECK(dump.find("addi") != std::string::npos);
}

TEST_CASE("float feedback specializes to the f64 file instead") {
  std::string src =
      "sum <- function() {\n"
      "  total <- 0.0\n"
      "  for (i in 1:length) total <- total + data[[i]]\n"
      "  total\n"
      "}\n"
      "length <- 4\ndata <- c(0.5, 1.5, 2.5, 3.5)\n"
      "for (r in 1:3) sum()\n";
  Compiled c(src, "sum");
  CHECK(count_rop(c.ir, ROp::AddF) >= 1);
  CHECK(count_rop(c.ir, ROp::AddI) == 0);
}

TEST_CASE("cold call sites fall back to dynamic calls, hot ones bind") {
  std::string src =
      "g <- function(x) { x + 1 }\n"
      "f <- function(n) {\n"
      "  t <- 0\n"
      "  for (i in 1:n) t <- t + g(i)\n"
      "  t\n"
      "}\n"
      "f(20)\n";
  Compiled c(src, "f");
  // The monomorphic call to `g` binds a direct callee.
  CHECK(count_rop(c.ir, ROp::CallD) == 1);
  REQUIRE(c.ir.callees.size() == 1);
  CHECK(c.ir.callees[0]->name == "g");
}

TEST_CASE("exit descriptors cover the frame at every guard") {
  Compiled c(kSumProgram, "sum");
  optimize(c.ir);
  for (const GuardInfo& g : c.ir.guards) {
    REQUIRE(g.exit >= 0);
    REQUIRE(g.exit < (int)c.ir.exits.size());
    const ExitDescr& e = c.ir.exits[(size_t)g.exit];
    CHECK(e.bc_pc >= 0);
    CHECK(e.bc_pc <= (int)c.fn->code.size());
    CHECK(e.locals.size() == (size_t)c.fn->nlocals());
  }
}

TEST_CASE("verifier flags a guard whose exit index is out of range") {
  Compiled c(kSumProgram, "sum");
  REQUIRE_FALSE(c.ir.guards.empty());
  IRFunction broken = c.ir;
  broken.guards[0].exit = (int)broken.exits.size() + 7;
  CHECK_FALSE(verify_checkpoints(broken).empty());
}

TEST_CASE("maybe-assigned locals decline compilation") {
  // `t` is assigned on only one path before its use, which the register
  // allocator does not model; the unit is declined, not miscompiled.
  std::string src =
      "f <- function(x) {\n"
      "  if (x < 5) t <- 1\n"
      "  t\n"
      "}\n"
      "f(1)\nf(2)\n";
  LoweredProgram prog = lower(parse(src));
  VmConfig cfg;
  cfg.jit = false;
  Vm vm(cfg);
  vm.run_main(prog);
  const BytecodeFunction* f = prog.find("f");
  TranslateRequest req;
  req.fn = f;
  req.entry_pc = 0;
  req.seed_locals.assign((size_t)f->nlocals(), std::nullopt);
  for (int32_t p : f->param_locals) req.seed_locals[(size_t)p] = TypeTag::Any;
  CHECK_THROWS_AS(translate(vm, req, vm.state(f).feedback),
                  CompileUnsupported);

  // End to end the program still runs (baseline tier) with jit on.
  VmConfig jit;
  jit.inv_threshold = 0;
  RunResult r = run_program_source(src + "print(f(1))\n", jit);
  CHECK(r.output == "int[1]\n");
}

TEST_CASE("trusted mid-loop entry compiles a continuation at that pc") {
  Compiled base(kSumProgram, "sum");
  // Find a checkpoint-bearing exit to use as a continuation entry.
  REQUIRE_FALSE(base.ir.exits.empty());
  const ExitDescr& e = base.ir.exits.back();
  TranslateRequest req;
  req.fn = base.fn;
  req.entry_pc = e.bc_pc;
  for (const SlotSrc& s : e.stack)
    req.seed_stack.push_back(s.type == TypeTag::Any ? TypeTag::IntScalar
                                                    : s.type);
  for (const SlotSrc& s : e.locals)
    req.seed_locals.push_back(s.cls == SlotCls::Missing
                                  ? std::optional<TypeTag>()
                                  : std::optional<TypeTag>(TypeTag::IntScalar));
  req.trusted = true;
  req.received_env = true;
  IRFunction cont = translate(base.vm, req, base.vm.state(base.fn).feedback);
  CHECK(cont.entry.entry_pc == e.bc_pc);
  CHECK(verify_checkpoints(cont).empty());
  optimize(cont);
  CHECK(verify_checkpoints(cont).empty());
  std::unique_ptr<Continuation> emitted = emit(std::move(cont));
  REQUIRE(emitted != nullptr);
  CHECK_FALSE(emitted->prog.code.empty());
}

TEST_CASE("emit compacts nops and keeps the code executable") {
  Compiled c(kSumProgram, "sum");
  optimize(c.ir);
  std::unique_ptr<Continuation> cont = emit(std::move(c.ir));
  for (const RInstr& i : cont->prog.code) CHECK(i.op != ROp::Nop);
}

TEST_CASE("differential: generated corpus agrees across tiers") {
  for (uint64_t seed = 1; seed <= 40; seed++) {
    CAPTURE(seed);
    std::string src = generate_program(seed);
    VmConfig interp;
    interp.jit = false;
    std::string ref = run_program_source(src, interp).output;

    VmConfig hot;
    hot.inv_threshold = 0;
    hot.edge_threshold = 10;
    CHECK(run_program_source(src, hot).output == ref);

    VmConfig dless = hot;
    dless.deoptless = true;
    CHECK(run_program_source(src, dless).output == ref);
  }
}

TEST_CASE("differential: forced guard failures stay transparent") {
  // Regression for the exit metadata of result guards: under random forced
  // failures every checkpoint's slot sources get exercised, and any slot
  // read from the wrong register file shows up as a wrong printed sum.
  std::string src =
      "sum <- function() {\n"
      "  total <- 0\n"
      "  for (i in 1:length) total <- total + data[[i]]\n"
      "  total\n"
      "}\n"
      "mk <- function(n) {\n"
      "  v <- c()\n"
      "  for (i in 1:n) v[[i]] <- i * 1.5\n"
      "  v\n"
      "}\n"
      "length <- 500\ndata <- mk(500)\n"
      "for (r in 1:10) print(sum())\n";
  VmConfig interp;
  interp.jit = false;
  std::string ref = run_program_source(src, interp).output;
  for (uint64_t seed = 1; seed <= 20; seed++) {
    CAPTURE(seed);
    for (bool dless : {false, true}) {
      VmConfig cfg;
      cfg.inv_threshold = 0;
      cfg.edge_threshold = 50;
      cfg.deoptless = dless;
      cfg.force_fail_p = 2e-3;
      cfg.seed = seed;
      CHECK(run_program_source(src, cfg).output == ref);
    }
  }
}

TEST_CASE("redefining a global retires dependent code") {
  std::string src =
      "g <- function(x) { x + 1 }\n"
      "f <- function(n) {\n"
      "  t <- 0\n"
      "  for (i in 1:n) t <- t + g(i)\n"
      "  t\n"
      "}\n"
      "for (r in 1:8) print(f(50))\n"
      "g <- function(x) { x * 10 }\n"
      "for (r in 1:8) print(f(50))\n";
  VmConfig interp;
  interp.jit = false;
  std::string ref = run_program_source(src, interp).output;
  VmConfig hot;
  hot.inv_threshold = 2;
  CHECK(run_program_source(src, hot).output == ref);
}
