#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dl/progen.hpp"

namespace dl {
namespace {

// Grammar-directed generator. Safety is structural: names are globally
// unique (so function locals never shadow globals), loops iterate over
// `1:k` or `1:length(v)`, indexing uses the matching loop variable or a
// constant within the tracked length, calls only reach previously finished
// functions (no recursion), and while loops count a reserved variable.
class Gen {
 public:
  explicit Gen(uint64_t seed) : rng_(seed ^ 0x9e3779b97f4a7c15ull) {}

  std::string run() {
    int nglobals = ri(1, 3);
    for (int i = 0; i < nglobals; i++) emit_def(globals_, true);

    int nfuncs = ri(1, 3);
    for (int i = 0; i < nfuncs; i++) {
      emit_func();
      if (chance(40)) emit_def(globals_, true);
    }

    // Top-level driver: a hot loop of calls so functions get compiled,
    // then a tail of mixed statements and prints.
    Scope sc = globals_;
    std::vector<LoopCtx> loops;
    if (!funcs_.empty()) {
      std::string acc = fresh("acc");
      line(acc + " <- 0");
      sc.push_back({acc, false, 0});
      std::string i = fresh("i");
      line("for (" + i + " in 1:" + std::to_string(ri(12, 30)) + ") {");
      indent_++;
      sc.push_back({i, false, 0, false});
      line(acc + " <- " + acc + " + " + call_expr(sc));
      if (chance(50)) stmt(sc, loops, 1);
      indent_--;
      line("}");
      line("print(" + acc + ")");
    }
    int tail = ri(2, 6);
    for (int i = 0; i < tail; i++) stmt(sc, loops, 0);
    line("print(" + num_expr(sc, loops, 2) + ")");
    return out_.str();
  }

 private:
  struct Var {
    std::string name;
    bool is_vec;
    int len;  // valid for vectors
    // Whether assignment through this name is legal here. At top level
    // everything is; in a function body only parameters and locals are —
    // assigning a global's name would make it a local of the whole function
    // and turn earlier reads of it into unbound-local errors.
    bool mut = true;
  };
  using Scope = std::vector<Var>;
  struct LoopCtx {
    std::string var;  // loop variable running 1:length(vec)
    std::string vec;
  };
  struct Func {
    std::string name;
    std::vector<bool> vec_params;
  };

  std::mt19937_64 rng_;
  std::ostringstream out_;
  int indent_ = 0;
  int names_ = 0;
  Scope globals_;
  std::vector<Func> funcs_;
  int if_depth_ = 0;  // appends are only emitted on unconditional paths

  int ri(int lo, int hi) {
    return lo + (int)(rng_() % (uint64_t)(hi - lo + 1));
  }
  bool chance(int pct) { return ri(1, 100) <= pct; }
  std::string fresh(const char* p) { return p + std::to_string(names_++); }
  void line(const std::string& s) {
    out_ << std::string((size_t)indent_ * 2, ' ') << s << "\n";
  }

  std::string num_lit() {
    if (chance(60)) return std::to_string(ri(0, 9));
    static const char* floats[] = {"0.5", "1.25", "2.5", "3.75", "0.125"};
    return floats[ri(0, 4)];
  }

  const Var* pick_scalar(const Scope& sc) {
    std::vector<const Var*> c;
    for (const Var& v : sc)
      if (!v.is_vec) c.push_back(&v);
    return c.empty() ? nullptr : c[(size_t)ri(0, (int)c.size() - 1)];
  }

  const Var* pick_vec(const Scope& sc) {
    std::vector<const Var*> c;
    for (const Var& v : sc)
      if (v.is_vec) c.push_back(&v);
    return c.empty() ? nullptr : c[(size_t)ri(0, (int)c.size() - 1)];
  }

  std::string vec_literal(int* len_out) {
    int k = ri(2, 6);
    // Uniform int, uniform float, or a numeric mix (becomes a boxed vector).
    int flavor = ri(0, 2);
    std::string s = "c(";
    for (int i = 0; i < k; i++) {
      if (i) s += ", ";
      if (flavor == 0) s += std::to_string(ri(0, 9));
      else if (flavor == 1) s += std::to_string(ri(0, 9)) + ".0";
      else s += num_lit();
    }
    s += ")";
    *len_out = k;
    return s;
  }

  std::string num_expr(const Scope& sc, const std::vector<LoopCtx>& loops,
                       int depth) {
    int roll = ri(0, 99);
    if (depth == 0 || roll < 25) {
      if (roll < 12)
        if (const Var* v = pick_scalar(sc)) return v->name;
      return num_lit();
    }
    if (roll < 45) {
      if (const Var* v = pick_scalar(sc)) return v->name;
      return num_lit();
    }
    if (roll < 60 && !loops.empty()) {
      const LoopCtx& c = loops[(size_t)ri(0, (int)loops.size() - 1)];
      return c.vec + "[[" + c.var + "]]";
    }
    if (roll < 70) {
      if (const Var* v = pick_vec(sc))
        return v->name + "[[" + std::to_string(ri(1, std::min(v->len, 3))) +
               "]]";
    }
    if (roll < 78) {
      if (const Var* v = pick_vec(sc)) return "length(" + v->name + ")";
    }
    if (roll < 88)
      return "(" + num_expr(sc, loops, depth - 1) + " / " +
             (chance(50) ? "2.0" : "4") + ")";
    static const char* ops[] = {" + ", " - ", " * ", " + "};
    return "(" + num_expr(sc, loops, depth - 1) + ops[ri(0, 3)] +
           num_expr(sc, loops, depth - 1) + ")";
  }

  std::string bool_expr(const Scope& sc, const std::vector<LoopCtx>& loops) {
    if (chance(10)) return chance(50) ? "TRUE" : "FALSE";
    static const char* ops[] = {" == ", " < ", " <= ", " > "};
    return num_expr(sc, loops, 1) + ops[ri(0, 3)] + num_expr(sc, loops, 1);
  }

  std::string call_expr(const Scope& sc) {
    const Func& f = funcs_[(size_t)ri(0, (int)funcs_.size() - 1)];
    std::string s = f.name + "(";
    std::vector<LoopCtx> none;
    for (size_t i = 0; i < f.vec_params.size(); i++) {
      if (i) s += ", ";
      if (f.vec_params[i]) {
        if (const Var* v = pick_vec(sc)) {
          s += v->name;
        } else {
          int len;
          s += vec_literal(&len);
        }
      } else {
        s += num_expr(sc, none, 1);
      }
    }
    return s + ")";
  }

  // Emits `name <- <scalar or vector>` and registers it in the scope.
  void emit_def(Scope& sc, bool allow_vec) {
    std::string n = fresh("g");
    if (allow_vec && chance(45)) {
      int len;
      std::string lit = vec_literal(&len);
      line(n + " <- " + lit);
      sc.push_back({n, true, len});
    } else {
      std::vector<LoopCtx> none;
      line(n + " <- " + num_expr(sc, none, 1));
      sc.push_back({n, false, 0});
    }
  }

  void stmt(Scope& sc, std::vector<LoopCtx>& loops, int depth) {
    int roll = ri(0, 99);
    if (roll < 18) {  // new binding
      emit_def(sc, true);
    } else if (roll < 32) {  // update an existing scalar
      std::vector<const Var*> c;
      for (const Var& v : sc)
        if (!v.is_vec && v.mut) c.push_back(&v);
      if (!c.empty()) {
        line(c[(size_t)ri(0, (int)c.size() - 1)]->name + " <- " +
             num_expr(sc, loops, 2));
        return;
      }
      emit_def(sc, false);
    } else if (roll < 44) {  // indexed write
      Var* target = nullptr;
      std::vector<Var*> c;
      for (Var& v : sc)
        if (v.is_vec && v.mut) c.push_back(&v);
      if (!c.empty()) target = c[(size_t)ri(0, (int)c.size() - 1)];
      if (!target) {
        emit_def(sc, true);
        return;
      }
      // Inside a loop over this vector, write through the loop variable;
      // otherwise a constant slot, occasionally an append.
      for (const LoopCtx& lc : loops)
        if (lc.vec == target->name) {
          line(target->name + "[[" + lc.var + "]] <- " +
               num_expr(sc, loops, 2));
          return;
        }
      if (loops.empty() && if_depth_ == 0 && chance(30)) {
        line(target->name + "[[" + std::to_string(target->len + 1) +
             "]] <- " + num_expr(sc, loops, 2));
        target->len++;
      } else {
        line(target->name + "[[" + std::to_string(ri(1, target->len)) +
             "]] <- " + num_expr(sc, loops, 2));
      }
    } else if (roll < 56 && !funcs_.empty()) {  // call
      std::string n = fresh("r");
      line(n + " <- " + call_expr(sc));
      sc.push_back({n, false, 0});
    } else if (roll < 72 && depth < 2) {  // for loop
      std::string iv = fresh("i");
      const Var* v = chance(55) ? pick_vec(sc) : nullptr;
      if (v) {
        line("for (" + iv + " in 1:length(" + v->name + ")) {");
        loops.push_back({iv, v->name});
      } else {
        line("for (" + iv + " in 1:" + std::to_string(ri(2, 12)) + ") {");
      }
      indent_++;
      size_t mark = sc.size();
      // Readable but not assignable inside its own loop: rebinding the
      // running variable would change the iteration count.
      sc.push_back({iv, false, 0, false});
      int k = ri(1, 3);
      for (int i = 0; i < k; i++) stmt(sc, loops, depth + 1);
      sc.resize(mark);  // bindings from the body may be loop-carried only
      indent_--;
      line("}");
      if (v) loops.pop_back();
      sc.push_back({iv, false, 0});  // the loop variable persists
    } else if (roll < 80 && depth < 2) {  // while with a reserved counter
      std::string w = fresh("w");
      line(w + " <- 0");
      line("while (" + w + " < " + std::to_string(ri(2, 8)) + ") {");
      indent_++;
      size_t mark = sc.size();
      int k = ri(1, 2);
      for (int i = 0; i < k; i++) stmt(sc, loops, depth + 1);
      line(w + " <- " + w + " + 1");
      sc.resize(mark);
      indent_--;
      line("}");
      sc.push_back({w, false, 0});
    } else if (roll < 92) {  // if/else
      line("if (" + bool_expr(sc, loops) + ") {");
      indent_++;
      if_depth_++;
      size_t mark = sc.size();
      stmt(sc, loops, depth + 1);
      sc.resize(mark);
      indent_--;
      if (chance(70)) {
        line("} else {");
        indent_++;
        stmt(sc, loops, depth + 1);
        sc.resize(mark);
        indent_--;
      }
      if_depth_--;
      line("}");
    } else {  // print
      if (chance(30)) {
        if (const Var* v = pick_vec(sc)) {
          line("print(" + v->name + ")");
          return;
        }
      }
      line("print(" + num_expr(sc, loops, 2) + ")");
    }
  }

  void emit_func() {
    Func f;
    f.name = fresh("f");
    std::vector<std::string> params;
    int np = ri(0, 2);
    for (int i = 0; i < np; i++) {
      f.vec_params.push_back(chance(40));
      params.push_back(fresh("p"));
    }
    std::string sig = f.name + " <- function(";
    for (size_t i = 0; i < params.size(); i++) {
      if (i) sig += ", ";
      sig += params[i];
    }
    line(sig + ") {");
    indent_++;

    // Functions see the globals defined so far (read-only here) plus their
    // parameters. Callers always pass vectors of length >= 2.
    Scope sc = globals_;
    for (Var& v : sc) v.mut = false;
    for (size_t i = 0; i < params.size(); i++)
      sc.push_back({params[i], f.vec_params[i], 2, true});
    std::vector<LoopCtx> loops;
    int k = ri(2, 5);
    for (int i = 0; i < k; i++) stmt(sc, loops, 1);
    line(num_expr(sc, loops, 2));

    indent_--;
    line("}");
    funcs_.push_back(std::move(f));
  }
};

}  // namespace

std::string generate_program(uint64_t seed) { return Gen(seed).run(); }

}  // namespace dl
