#include <algorithm>
#include <map>

#include "dl/ast.hpp"
#include "dl/bytecode.hpp"

namespace dl {

namespace {

void collect_locals(const std::vector<StmtP>& stmts,
                    std::vector<std::string>& out) {
  auto add = [&out](const std::string& n) {
    for (const auto& s : out)
      if (s == n) return;
    out.push_back(n);
  };
  for (const auto& sp : stmts) {
    const Stmt& s = *sp;
    switch (s.kind) {
      case Stmt::Kind::Assign:
      case Stmt::Kind::IndexAssign:
        add(s.name);
        break;
      case Stmt::Kind::For:
        add(s.name);
        collect_locals(s.body, out);
        break;
      case Stmt::Kind::If:
        collect_locals(s.body, out);
        collect_locals(s.else_body, out);
        break;
      case Stmt::Kind::While:
        collect_locals(s.body, out);
        break;
      default:
        break;
    }
  }
}

// Loop variables are locals even at top level (ForSeqNext needs a local
// slot); everything else at top level stays global.
void collect_loop_vars(const std::vector<StmtP>& stmts,
                       std::vector<std::string>& out) {
  for (const auto& sp : stmts) {
    const Stmt& s = *sp;
    switch (s.kind) {
      case Stmt::Kind::For:
        if (std::find(out.begin(), out.end(), s.name) == out.end())
          out.push_back(s.name);
        collect_loop_vars(s.body, out);
        break;
      case Stmt::Kind::If:
        collect_loop_vars(s.body, out);
        collect_loop_vars(s.else_body, out);
        break;
      case Stmt::Kind::While:
        collect_loop_vars(s.body, out);
        break;
      default:
        break;
    }
  }
}

class FnLowerer {
 public:
  FnLowerer(LoweredProgram& prog, BytecodeFunction& f, bool toplevel)
      : prog_(prog), f_(f), toplevel_(toplevel) {}

  void lower_body(const std::vector<StmtP>& stmts) {
    bool tail_expr =
        !stmts.empty() && stmts.back()->kind == Stmt::Kind::ExprStmt;
    for (size_t i = 0; i < stmts.size(); i++) {
      bool last = i + 1 == stmts.size();
      stmt(*stmts[i], last && tail_expr);
    }
    int line = stmts.empty() ? 0 : stmts.back()->line;
    if (!tail_expr) emit(Opcode::LoadConst, const_idx(Value()), 0, line);
    emit(Opcode::Return, 0, 0, line);
  }

 private:
  int emit(Opcode op, int32_t a, int32_t b, int line) {
    f_.code.push_back({op, a, b, line});
    return (int)f_.code.size() - 1;
  }

  int const_idx(const Value& v) {
    if (!v.is_closure()) {
      std::string key = v.render();
      auto it = const_keys_.find(key);
      if (it != const_keys_.end()) return it->second;
      f_.consts.push_back(v);
      const_keys_[key] = (int)f_.consts.size() - 1;
      return const_keys_[key];
    }
    f_.consts.push_back(v);
    return (int)f_.consts.size() - 1;
  }

  int global_idx(const std::string& name) {
    for (size_t i = 0; i < f_.global_names.size(); i++)
      if (f_.global_names[i] == name) return (int)i;
    f_.global_names.push_back(name);
    return (int)f_.global_names.size() - 1;
  }

  void patch_to_here(int branch_pc) {
    f_.code[(size_t)branch_pc].a = (int)f_.code.size() - branch_pc - 1;
  }

  void stmt(const Stmt& s, bool value_position) {
    switch (s.kind) {
      case Stmt::Kind::ExprStmt:
        expr(*s.e1);
        if (!value_position) emit(Opcode::Pop, 0, 0, s.line);
        break;
      case Stmt::Kind::Assign: {
        expr(*s.e1);
        int l = f_.local_index(s.name);
        if (l >= 0)
          emit(Opcode::StoreLocal, l, 0, s.line);
        else
          emit(Opcode::StoreGlobal, global_idx(s.name), 0, s.line);
        break;
      }
      case Stmt::Kind::IndexAssign: {
        int l = f_.local_index(s.name);
        if (l >= 0) {
          expr(*s.e1);
          expr(*s.e2);
          emit(Opcode::IndexSet, l, 0, s.line);
        } else {
          int g = global_idx(s.name);
          emit(Opcode::LoadGlobal, g, 0, s.line);
          expr(*s.e1);
          expr(*s.e2);
          emit(Opcode::IndexSetV, 0, 0, s.line);
          emit(Opcode::StoreGlobal, g, 0, s.line);
        }
        break;
      }
      case Stmt::Kind::If: {
        expr(*s.e1);
        int to_else = emit(Opcode::BranchIfFalse, 0, 0, s.line);
        for (const auto& st : s.body) stmt(*st, false);
        if (s.else_body.empty()) {
          patch_to_here(to_else);
        } else {
          int to_end = emit(Opcode::Branch, 0, 0, s.line);
          patch_to_here(to_else);
          for (const auto& st : s.else_body) stmt(*st, false);
          patch_to_here(to_end);
        }
        break;
      }
      case Stmt::Kind::While: {
        int cond_pc = (int)f_.code.size();
        expr(*s.e1);
        int to_exit = emit(Opcode::BranchIfFalse, 0, 0, s.line);
        for (const auto& st : s.body) stmt(*st, false);
        int back = emit(Opcode::Branch, 0, 0, s.line);
        f_.code[(size_t)back].a = cond_pc - back - 1;
        patch_to_here(to_exit);
        break;
      }
      case Stmt::Kind::For: {
        int l = f_.local_index(s.name);
        expr(*s.e1);
        expr(*s.e2);
        emit(Opcode::ForSeqInit, l, 0, s.line);
        int next_pc = emit(Opcode::ForSeqNext, l, 0, s.line);
        for (const auto& st : s.body) stmt(*st, false);
        int back = emit(Opcode::Branch, 0, 0, s.line);
        f_.code[(size_t)back].a = next_pc - back - 1;
        f_.code[(size_t)next_pc].b = (int)f_.code.size() - next_pc - 1;
        break;
      }
      case Stmt::Kind::Return:
        expr(*s.e1);
        emit(Opcode::Return, 0, 0, s.line);
        break;
      case Stmt::Kind::FuncDef: {
        if (!toplevel_)
          throw LowerError(
              "function definitions are only allowed at top level");
        auto fn = std::make_unique<BytecodeFunction>();
        fn->name = s.name;
        fn->id = (int)prog_.fns.size();
        collect_locals(s.body, fn->locals);
        for (const auto& p : s.params) {
          int idx = fn->local_index(p);
          if (idx < 0) {
            fn->locals.push_back(p);
            idx = (int)fn->locals.size() - 1;
          }
          fn->param_locals.push_back(idx);
        }
        BytecodeFunction* raw = fn.get();
        prog_.fns.push_back(std::move(fn));
        FnLowerer inner(prog_, *raw, false);
        inner.lower_body(s.body);
        emit(Opcode::LoadConst, const_idx(Value::closure(raw)), 0, s.line);
        emit(Opcode::StoreGlobal, global_idx(s.name), 0, s.line);
        break;
      }
    }
  }

  void expr(const Expr& e) {
    switch (e.kind) {
      case Expr::Kind::IntLit:
        emit(Opcode::LoadConst, const_idx(Value::int_scalar(e.int_val)), 0,
             e.line);
        break;
      case Expr::Kind::FloatLit:
        emit(Opcode::LoadConst, const_idx(Value::float_scalar(e.float_val)), 0,
             e.line);
        break;
      case Expr::Kind::BoolLit:
        emit(Opcode::LoadConst, const_idx(Value::bool_scalar(e.bool_val)), 0,
             e.line);
        break;
      case Expr::Kind::Var: {
        int l = f_.local_index(e.name);
        if (l >= 0)
          emit(Opcode::LoadLocal, l, 0, e.line);
        else
          emit(Opcode::LoadGlobal, global_idx(e.name), 0, e.line);
        break;
      }
      case Expr::Kind::Binary:
        expr(*e.lhs);
        expr(*e.rhs);
        emit(Opcode::BinOp, (int32_t)e.op, 0, e.line);
        break;
      case Expr::Kind::Index:
        expr(*e.lhs);
        expr(*e.rhs);
        emit(Opcode::IndexGet, 0, 0, e.line);
        break;
      case Expr::Kind::Call:
        expr(*e.callee);
        for (const auto& a : e.args) expr(*a);
        emit(Opcode::Call, (int32_t)e.args.size(), 0, e.line);
        break;
      case Expr::Kind::Concat:
        for (const auto& a : e.args) expr(*a);
        emit(Opcode::MakeVec, (int32_t)e.args.size(), 0, e.line);
        break;
      case Expr::Kind::Length:
        expr(*e.args[0]);
        emit(Opcode::Length, 0, 0, e.line);
        break;
      case Expr::Kind::Print:
        expr(*e.args[0]);
        emit(Opcode::Print, 0, 0, e.line);
        break;
    }
  }

  LoweredProgram& prog_;
  BytecodeFunction& f_;
  bool toplevel_;
  std::map<std::string, int> const_keys_;
};

}  // namespace

LoweredProgram lower(const Program& ast) {
  LoweredProgram prog;
  auto main_fn = std::make_unique<BytecodeFunction>();
  main_fn->name = "<main>";
  main_fn->id = 0;
  // At top level only loop variables are locals; plain assignments bind
  // globals so functions can see them.
  collect_loop_vars(ast.stmts, main_fn->locals);
  prog.main = main_fn.get();
  prog.fns.push_back(std::move(main_fn));
  FnLowerer top(prog, *prog.main, true);
  top.lower_body(ast.stmts);
  // Sanity: every function must pass the depth analysis.
  for (const auto& f : prog.fns) stack_depths(*f);
  return prog;
}

}  // namespace dl
