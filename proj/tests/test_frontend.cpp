// Parser and lowering: AST shape, source round-tripping, local-table layout,
// builtin resolution, and the static bytecode analyses.

#include "doctest.h"

#include <algorithm>

#include "dl/ast.hpp"
#include "dl/bytecode.hpp"
#include "dl/parse.hpp"

using namespace dl;

namespace {

int count_op(const BytecodeFunction& f, Opcode op) {
  return (int)std::count_if(f.code.begin(), f.code.end(),
                            [&](const Instr& i) { return i.op == op; });
}

}  // namespace

TEST_CASE("parse builds the expected AST for basic forms") {
  Program p = parse("x <- 1 + 2 * 3\n");
  REQUIRE(p.stmts.size() == 1);
  CHECK(p.stmts[0]->kind == Stmt::Kind::Assign);
  CHECK(p.stmts[0]->name == "x");
  const Expr& e = *p.stmts[0]->e1;
  CHECK(e.kind == Expr::Kind::Binary);
  CHECK(e.op == BinOp::Add);
  // * binds tighter than +.
  CHECK(e.rhs->kind == Expr::Kind::Binary);
  CHECK(e.rhs->op == BinOp::Mul);

  p = parse("f <- function(a, b) { a + b }\n");
  REQUIRE(p.stmts.size() == 1);
  CHECK(p.stmts[0]->kind == Stmt::Kind::FuncDef);
  CHECK(p.stmts[0]->params == std::vector<std::string>{"a", "b"});

  p = parse("for (i in 1:10) print(i)\n");
  CHECK(p.stmts[0]->kind == Stmt::Kind::For);
  p = parse("if (x < 1) y <- 1 else y <- 2\n");
  CHECK(p.stmts[0]->kind == Stmt::Kind::If);
  REQUIRE(p.stmts[0]->else_body.size() == 1);
  p = parse("x[[3]] <- 4\n");
  CHECK(p.stmts[0]->kind == Stmt::Kind::IndexAssign);
}

TEST_CASE("parse round-trips through the AST renderer") {
  const char* sources[] = {
      "x <- 1\n",
      "f <- function(n) {\n  s <- 0\n  for (i in 1:n) s <- s + i\n  s\n}\n",
      "if (a <= b) print(a) else print(b)\n",
      "v <- c(1, 2.5, TRUE)\n",
      "while (x < 10) x <- x + 1\n",
      "t[[i]] <- length(v)\n",
  };
  for (const char* src : sources) {
    CAPTURE(src);
    std::string r1 = render(parse(src));
    std::string r2 = render(parse(r1));
    CHECK(r1 == r2);
  }
}

TEST_CASE("syntax errors carry line and column") {
  try {
    parse("x <- 1\ny <- (2\n");
    FAIL("expected SyntaxError");
  } catch (const SyntaxError& e) {
    CHECK(e.line >= 2);  // reported at or after the unclosed paren
    CHECK(std::string(e.what()).find("syntax error") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("for i in 1:3) print(i)\n"), SyntaxError);
  CHECK_THROWS_AS(parse("x <- \n"), SyntaxError);
  CHECK_THROWS_AS(parse("function(x) { x }\n"), SyntaxError);
}

TEST_CASE("locals are first-assignment order then parameters") {
  Program ast = parse(
      "f <- function(colIndex, t) {\n"
      "  dataCol <- t[[colIndex]]\n"
      "  res <- 0\n"
      "  for (i in 1:length(dataCol)) res <- res + dataCol[[i]]\n"
      "  res\n"
      "}\n");
  LoweredProgram prog = lower(ast);
  BytecodeFunction* f = prog.find("f");
  REQUIRE(f != nullptr);
  CHECK(f->locals ==
        std::vector<std::string>{"dataCol", "res", "i", "colIndex", "t"});
  REQUIRE(f->param_locals.size() == 2);
  CHECK(f->locals[(size_t)f->param_locals[0]] == "colIndex");
  CHECK(f->locals[(size_t)f->param_locals[1]] == "t");
  CHECK(f->local_index("res") == 1);
  CHECK(f->local_index("nope") == -1);
}

TEST_CASE("builtins resolve only at call position") {
  // `length` used as a variable and as the builtin in one program.
  LoweredProgram prog = lower(parse(
      "length <- 5\n"
      "v <- c(1, 2)\n"
      "print(length(v))\n"
      "print(length)\n"));
  REQUIRE(prog.main != nullptr);
  CHECK(count_op(*prog.main, Opcode::Length) == 1);
  CHECK(count_op(*prog.main, Opcode::MakeVec) == 1);
  CHECK(count_op(*prog.main, Opcode::Print) == 2);
  // print at expression position evaluates to the printed value.
  Program ast = parse("x <- print(3)\n");
  CHECK(ast.stmts[0]->e1->kind == Expr::Kind::Print);
}

TEST_CASE("top level assigns globals, function bodies assign locals") {
  LoweredProgram prog = lower(parse(
      "g <- 1\n"
      "f <- function() { l <- 2\n l }\n"
      "g <- f()\n"));
  CHECK(count_op(*prog.main, Opcode::StoreGlobal) >= 2);
  CHECK(count_op(*prog.main, Opcode::StoreLocal) == 0);
  BytecodeFunction* f = prog.find("f");
  REQUIRE(f);
  CHECK(count_op(*f, Opcode::StoreGlobal) == 0);
  CHECK(count_op(*f, Opcode::StoreLocal) == 1);
}

TEST_CASE("for loops lower to the dedicated sequence opcodes") {
  LoweredProgram prog = lower(parse(
      "f <- function(n) {\n"
      "  s <- 0\n"
      "  for (i in 1:n) s <- s + i\n"
      "  s\n"
      "}\n"));
  BytecodeFunction* f = prog.find("f");
  REQUIRE(f);
  CHECK(count_op(*f, Opcode::ForSeqInit) == 1);
  CHECK(count_op(*f, Opcode::ForSeqNext) == 1);
  // The loop closes with a negative (back-edge) branch.
  bool has_back_edge = false;
  for (const Instr& i : f->code)
    if (i.op == Opcode::Branch && i.a < 0) has_back_edge = true;
  CHECK(has_back_edge);
  std::string dis = disassemble(*f);
  CHECK(dis.find("ForSeqInit") != std::string::npos);
}

TEST_CASE("every function ends in Return and main exists") {
  LoweredProgram prog = lower(parse("x <- 1\nf <- function() { 1 }\n"));
  REQUIRE(prog.main);
  CHECK(prog.main->name == "<main>");
  for (const auto& f : prog.fns) {
    REQUIRE(!f->code.empty());
    CHECK(count_op(*f, Opcode::Return) >= 1);
  }
  CHECK(prog.find("<main>") == prog.main);
  CHECK(prog.find("missing") == nullptr);
}

TEST_CASE("stack_depths is consistent and bounded") {
  LoweredProgram prog = lower(parse(
      "f <- function(a, b) {\n"
      "  x <- c(a, b, a + b)\n"
      "  s <- 0\n"
      "  for (i in 1:length(x)) {\n"
      "    if (x[[i]] < 10) s <- s + x[[i]] else s <- s - 1\n"
      "  }\n"
      "  s\n"
      "}\n"));
  for (const auto& f : prog.fns) {
    std::vector<int> d = stack_depths(*f);
    REQUIRE(d.size() == f->code.size());
    CHECK(d[0] == 0);
    int mx = max_stack_depth(*f);
    for (size_t pc = 0; pc < d.size(); pc++)
      if (d[(size_t)pc] >= 0) CHECK(d[(size_t)pc] <= mx);
  }
}

TEST_CASE("live_locals: loop variables live in body, dead after") {
  LoweredProgram prog = lower(parse(
      "f <- function(n) {\n"
      "  s <- 0\n"
      "  for (i in 1:n) s <- s + i\n"
      "  s\n"
      "}\n"));
  BytecodeFunction* f = prog.find("f");
  REQUIRE(f);
  auto live = live_locals(*f);
  REQUIRE(live.size() == f->code.size());
  int s = f->local_index("s");
  int i = f->local_index("i");
  REQUIRE(s >= 0);
  REQUIRE(i >= 0);
  // At every LoadLocal of `i`, `i` must be live-in.
  for (size_t pc = 0; pc < f->code.size(); pc++) {
    const Instr& ins = f->code[pc];
    if (ins.op == Opcode::LoadLocal && ins.a == i) CHECK(live[pc][(size_t)i]);
    // At the final Return, only the returned value's chain matters; `i`
    // is dead there.
    if (ins.op == Opcode::Return) CHECK_FALSE(live[pc][(size_t)i]);
  }
}

TEST_CASE("number literals: 1L is int, 1.5 is float, bare ints are int") {
  LoweredProgram prog = lower(parse("a <- 1L\nb <- 1.5\nc2 <- 7\n"));
  std::vector<TypeTag> tags;
  for (const Value& v : prog.main->consts) tags.push_back(type_of(v));
  CHECK(std::count(tags.begin(), tags.end(), TypeTag::IntScalar) >= 2);
  CHECK(std::count(tags.begin(), tags.end(), TypeTag::FloatScalar) >= 1);
}
