// Baseline-tier semantics, error reporting, profile recording, and tier
// transparency across threshold configurations.

#include "doctest.h"

#include <sstream>

#include "dl/harness.hpp"
#include "dl/parse.hpp"
#include "dl/vm.hpp"

using namespace dl;

namespace {

VmConfig interp_only() {
  VmConfig cfg;
  cfg.jit = false;
  return cfg;
}

std::string run_interp(const std::string& src) {
  return run_program_source(src, interp_only()).output;
}

const char* kSumSource =
    "sum <- function() {\n"
    "  total <- 0\n"
    "  for (i in 1:length) total <- total + data[[i]]\n"
    "  total\n"
    "}\n";

// The bytecode pc of the Add site in `total + data[[i]]`: the only BinOp
// with the Add operator in the function.
int add_site(const BytecodeFunction& f) {
  for (size_t pc = 0; pc < f.code.size(); pc++)
    if (f.code[pc].op == Opcode::BinOp && f.code[pc].a == (int)BinOp::Add)
      return (int)pc;
  return -1;
}

}  // namespace

TEST_CASE("arithmetic, loops and conditionals evaluate correctly") {
  CHECK(run_interp("print(1 + 2 * 3)\n") == "int[7]\n");
  CHECK(run_interp("print(7 / 2)\n") == "float[3.5]\n");
  CHECK(run_interp("s <- 0\nfor (i in 1:10) s <- s + i\nprint(s)\n") ==
        "int[55]\n");
  CHECK(run_interp("x <- 3\nif (x < 5) print(1) else print(2)\n") ==
        "int[1]\n");
  CHECK(run_interp("x <- 8\nif (x < 5) print(1) else print(2)\n") ==
        "int[2]\n");
  CHECK(run_interp("x <- 1\nwhile (x < 100) x <- x * 2\nprint(x)\n") ==
        "int[128]\n");
  CHECK(run_interp("v <- c(1, 2, 3)\nprint(length(v))\nprint(v[[2]])\n") ==
        "int[3]\nint[2]\n");
}

TEST_CASE("function calls, parameters and return") {
  CHECK(run_interp("f <- function(a, b) { a - b }\nprint(f(10, 4))\n") ==
        "int[6]\n");
  CHECK(run_interp("f <- function(n) {\n"
                   "  if (n < 2) return(n)\n"
                   "  n * 2\n"
                   "}\nprint(f(1))\nprint(f(5))\n") == "int[1]\nint[10]\n");
  // Functions are values; calling through a variable works.
  CHECK(run_interp("f <- function(x) { x + 1 }\ng <- f\nprint(g(1))\n") ==
        "int[2]\n");
}

TEST_CASE("the sum kernel over int and float data") {
  std::string pre = "length <- 10\ndata <- c(1,2,3,4,5,6,7,8,9,10)\n";
  CHECK(run_interp(kSumSource + pre + "print(sum())\n") == "int[55]\n");
  std::string fpre =
      "length <- 10\n"
      "data <- c(0.5,0.5,0.5,0.5,0.5,0.5,0.5,0.5,0.5,0.5)\n";
  CHECK(run_interp(kSumSource + fpre + "print(sum())\n") == "float[5]\n");
}

TEST_CASE("runtime errors render as a final error line") {
  std::string out = run_interp("v <- c(1, 2)\nprint(v[[5]])\n");
  CHECK(out.find("error: bounds error") != std::string::npos);
  out = run_interp("x <- 1 + TRUE\n");
  CHECK(out.find("error: type error") != std::string::npos);
  out = run_interp("f <- function() { y <- x\n x <- 1\n y }\nprint(f())\n");
  CHECK(out.find("used before assignment") != std::string::npos);
  out = run_interp("print(undefined_global)\n");
  CHECK(out.find("error:") != std::string::npos);
}

TEST_CASE("assignment anywhere in a function makes the name local") {
  // The read of `n` precedes the assignment, so it is an unassigned local,
  // not the global.
  std::string out = run_interp(
      "n <- 5\n"
      "f <- function() { t <- n\n n <- 1\n t }\n"
      "print(f())\n");
  CHECK(out.find("used before assignment") != std::string::npos);
}

TEST_CASE("feedback: typed sites record the observed tags") {
  LoweredProgram prog = lower(parse(
      std::string(kSumSource) +
      "length <- 10\ndata <- c(1,2,3,4,5,6,7,8,9,10)\nsum()\n"));
  Vm vm(interp_only());
  vm.run_main(prog);
  const BytecodeFunction* sum = prog.find("sum");
  REQUIRE(sum);
  int site = add_site(*sum);
  REQUIRE(site >= 0);
  const FeedbackStore& fb = vm.state(sum).feedback;
  const TypeRecord* rec = fb.type_at(site);
  REQUIRE(rec);
  CHECK(rec->seen);
  CHECK(rec->tag == TypeTag::IntScalar);
}

TEST_CASE("feedback: tags widen monotonically under lub") {
  LoweredProgram prog = lower(parse(
      std::string(kSumSource) +
      "length <- 3\ndata <- c(1, 2, 3)\nsum()\n"
      "data <- c(0.5, 0.5, 0.5)\nsum()\n"));
  Vm vm(interp_only());
  vm.run_main(prog);
  const BytecodeFunction* sum = prog.find("sum");
  int site = add_site(*sum);
  const TypeRecord* rec = vm.state(sum).feedback.type_at(site);
  REQUIRE(rec);
  // Int results then float results merge to their least upper bound.
  CHECK(rec->tag == lub(TypeTag::IntScalar, TypeTag::FloatScalar));
  CHECK(rec->tag == TypeTag::NumScalar);
}

TEST_CASE("feedback: branch bias and call targets") {
  LoweredProgram prog = lower(parse(
      "f <- function(x) { x }\n"
      "g <- function(x) { x + 1 }\n"
      "h <- function(sel) {\n"
      "  t <- 0\n"
      "  if (sel < 5) t <- f(sel) else t <- g(sel)\n"
      "  t\n"
      "}\n"
      "for (i in 1:10) h(i)\n"));
  Vm vm(interp_only());
  vm.run_main(prog);
  const BytecodeFunction* h = prog.find("h");
  REQUIRE(h);
  const FeedbackStore& fb = vm.state(h).feedback;
  bool saw_branch = false;
  for (const auto& [pc, b] : fb.branches) {
    saw_branch = true;
    CHECK(b.total() == 10);
    CHECK(b.taken == 6);      // sel >= 5 for 6 of the 10 calls
    CHECK(b.not_taken == 4);
  }
  CHECK(saw_branch);
  int call_sites = 0;
  for (const auto& [pc, c] : fb.calls) {
    call_sites++;
    CHECK(c.targets.size() == 1);  // each site is monomorphic
    CHECK(c.monomorphic_target() != nullptr);
  }
  CHECK(call_sites == 2);
}

TEST_CASE("call feedback goes megamorphic past three targets") {
  CallRecord r;
  BytecodeFunction a, b, c, d;
  r.record(&a);
  r.record(&b);
  CHECK_FALSE(r.megamorphic);
  r.record(&a);
  CHECK(r.targets.size() == 2);
  r.record(&c);
  CHECK(r.targets.size() == 3);
  CHECK(r.monomorphic_target() == nullptr);
  r.record(&d);
  CHECK(r.megamorphic);
  CHECK(r.targets.empty());
}

TEST_CASE("tier transparency across threshold configurations") {
  const char* programs[] = {
      "s <- 0\nfor (i in 1:500) s <- s + i\nprint(s)\n",
      "f <- function(n) {\n"
      "  t <- 0\n"
      "  for (i in 1:n) t <- t + i * i\n"
      "  t\n"
      "}\nfor (r in 1:20) print(f(300))\n",
      "sum <- function() {\n"
      "  total <- 0\n"
      "  for (i in 1:length) total <- total + data[[i]]\n"
      "  total\n"
      "}\n"
      "mk <- function(n) {\n"
      "  v <- c()\n"
      "  for (i in 1:n) v[[i]] <- i * 0.5\n"
      "  v\n"
      "}\n"
      "length <- 400\ndata <- mk(400)\n"
      "for (r in 1:15) print(sum())\n",
  };
  for (const char* src : programs) {
    CAPTURE(src);
    std::string ref = run_interp(src);
    for (int inv : {0, 1, 10, -1}) {
      for (int edge : {0, 50, 200, -1}) {
        for (bool osr : {true, false}) {
          VmConfig cfg;
          cfg.inv_threshold = inv;
          cfg.edge_threshold = edge;
          cfg.osr_in = osr;
          CAPTURE(inv);
          CAPTURE(edge);
          CAPTURE(osr);
          CHECK(run_program_source(src, cfg).output == ref);
        }
      }
    }
  }
}

TEST_CASE("osr-in fires on a hot loop and counts once per activation") {
  std::string src =
      "f <- function(n) {\n"
      "  t <- 0\n"
      "  for (i in 1:n) t <- t + i\n"
      "  t\n"
      "}\nprint(f(5000))\n";
  VmConfig cfg;
  cfg.inv_threshold = 1000000;  // keep whole-function compilation out
  cfg.edge_threshold = 100;
  RunResult r = run_program_source(src, cfg);
  CHECK(r.output == "int[12502500]\n");
  CHECK(r.stats.osr_in_count == 1);
  CHECK(r.stats.compile_count >= 1);

  cfg.edge_threshold = -1;
  RunResult r2 = run_program_source(src, cfg);
  CHECK(r2.output == r.output);
  CHECK(r2.stats.osr_in_count == 0);
}
