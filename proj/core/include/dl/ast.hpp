#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dl/value.hpp"

namespace dl {

struct Expr;
struct Stmt;
using ExprP = std::unique_ptr<Expr>;
using StmtP = std::unique_ptr<Stmt>;

struct Expr {
  enum class Kind {
    IntLit,
    FloatLit,
    BoolLit,
    Var,
    Binary,
    Index,   // lhs[[rhs]]
    Call,    // callee(args...); callee is any expression (usually Var)
    Concat,  // c(args...)
    Length,  // length(arg)
    Print,   // print(arg); evaluates to the printed value
  };

  Kind kind;
  int line = 0;
  int col = 0;

  int64_t int_val = 0;
  double float_val = 0;
  bool bool_val = false;
  std::string name;  // Var
  BinOp op = BinOp::Add;
  ExprP lhs, rhs;  // Binary, Index
  ExprP callee;
  std::vector<ExprP> args;  // Call, Concat, Length
};

struct Stmt {
  enum class Kind {
    ExprStmt,     // e
    Assign,       // name <- e1
    IndexAssign,  // name[[e1]] <- e2
    If,           // if (e1) body else else_body
    While,        // while (e1) body
    For,          // for (name in e1:e2) body
    Return,       // return(e1)
    FuncDef,      // name <- function(params) { body }   (top level only)
  };

  Kind kind;
  int line = 0;
  int col = 0;

  std::string name;
  ExprP e1, e2;
  std::vector<StmtP> body, else_body;
  std::vector<std::string> params;  // FuncDef
};

struct Program {
  std::vector<StmtP> stmts;
};

// Pretty-printer for the AST; emits valid DL source such that
// parse(render(ast)) reproduces the same AST.
std::string render(const Program& p);
std::string render(const Expr& e);

}  // namespace dl
