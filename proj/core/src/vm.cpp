#include <algorithm>
#include <chrono>

#include "json.hpp"

#include "dl/vm.hpp"

namespace dl {

Vm::Vm(VmConfig config) : cfg(config), rng(config.seed) {}

Value Vm::run_main(const LoweredProgram& prog) {
  return call(prog.main, {});
}

Value Vm::call(const BytecodeFunction* fn, std::vector<Value> args) {
  if ((int)args.size() != fn->nparams())
    throw TypeError("function " + fn->name + " expects " +
                    std::to_string(fn->nparams()) + " arguments, got " +
                    std::to_string(args.size()));
  if (call_depth >= cfg.max_call_depth)
    throw DlError("call depth limit of " +
                  std::to_string(cfg.max_call_depth) + " exceeded");
  call_depth++;
  struct Dec {
    int& d;
    ~Dec() { d--; }
  } dec{call_depth};
  return tier_dispatch(fn, args);
}

Value Vm::tier_dispatch(const BytecodeFunction* fn,
                        std::vector<Value>& args) {
  FunctionState& st = states_[fn];
  st.inv_count++;

  auto make_locals = [&]() {
    std::vector<std::optional<Value>> locals((size_t)fn->nlocals());
    for (size_t i = 0; i < args.size(); i++)
      locals[(size_t)fn->param_locals[i]] = std::move(args[i]);
    return locals;
  };

  if (cfg.jit && fn->id != 0 && !st.uncompilable) {
    if (st.compiled && st.compiled->retired) retire(std::move(st.compiled));
    if (!st.compiled &&
        (st.pending_full_compile ||
         (cfg.inv_threshold >= 0 &&
          (int64_t)st.inv_count > (int64_t)cfg.inv_threshold)))
      compile_full(fn);
    if (st.compiled && deps_valid(*st.compiled))
      return optexec_execute(*this, *st.compiled, {}, make_locals());
    if (st.compiled && st.compiled->retired) retire(std::move(st.compiled));
  }
  return interp_execute(*this, fn, 0, {}, make_locals());
}

void Vm::compile_full(const BytecodeFunction* fn) {
  FunctionState& st = states_[fn];
  st.pending_full_compile = false;

  TranslateRequest req;
  req.fn = fn;
  req.entry_pc = 0;
  req.seed_locals.assign((size_t)fn->nlocals(), std::nullopt);
  for (int32_t p : fn->param_locals)
    req.seed_locals[(size_t)p] = TypeTag::Any;

  auto t0 = std::chrono::steady_clock::now();
  try {
    IRFunction ir = translate(*this, req, st.feedback);
    optimize(ir, {cfg.unsafe_dse});
    st.compiled = emit(std::move(ir));
  } catch (const CompileUnsupported&) {
    st.uncompilable = true;
    return;
  }
  stats.compile_ns += (uint64_t)std::chrono::duration_cast<
                          std::chrono::nanoseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
  stats.compile_count++;
}

void Vm::retire(std::unique_ptr<Continuation> c) {
  if (c) graveyard_.push_back(std::move(c));
}

GlobalCell* Vm::global_cell(const std::string& name) {
  auto& slot = globals_[name];
  if (!slot) {
    slot = std::make_unique<GlobalCell>();
    slot->name = name;
  }
  return slot.get();
}

void Vm::set_global(const std::string& name, Value v) {
  GlobalCell* cell = global_cell(name);
  cell->value = std::move(v);
  cell->version++;
}

const Value* Vm::get_global(const std::string& name) const {
  auto it = globals_.find(name);
  if (it == globals_.end() || !it->second->value) return nullptr;
  return &*it->second->value;
}

std::string Vm::stats_json() const {
  nlohmann::json j;
  j["deopt_count"] = stats.deopt_count;
  j["deoptless_hit"] = stats.deoptless_hit;
  j["deoptless_compile"] = stats.deoptless_compile;
  j["true_deopt"] = stats.true_deopt;
  j["osr_in_count"] = stats.osr_in_count;
  j["compile_count"] = stats.compile_count;
  j["compile_ns"] = stats.compile_ns;

  std::vector<const std::pair<const BytecodeFunction* const, FunctionState>*>
      fns;
  for (const auto& kv : states_) fns.push_back(&kv);
  std::sort(fns.begin(), fns.end(), [](auto* a, auto* b) {
    return a->first->id < b->first->id;
  });
  nlohmann::json tables = nlohmann::json::array();
  for (auto* kv : fns) {
    for (const auto& [pc, table] : kv->second.tables) {
      nlohmann::json t;
      t["fn"] = kv->first->name;
      t["pc"] = pc;
      nlohmann::json entries = nlohmann::json::array();
      for (const ContEntry& e : table.entries) {
        nlohmann::json ej;
        ej["ctx"] = ctx_digest(e.ctx);
        ej["specificity"] = ctx_specificity(e.ctx);
        ej["uses"] = e.cont->use_count;
        ej["retired"] = e.cont->retired;
        entries.push_back(std::move(ej));
      }
      t["entries"] = std::move(entries);
      tables.push_back(std::move(t));
    }
  }
  j["tables"] = std::move(tables);
  return j.dump();
}

}  // namespace dl
