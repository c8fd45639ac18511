// Command line driver: run/disassemble/compile DL programs and reproduce
// the benchmark experiments.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"

#include "dl/harness.hpp"
#include "dl/parse.hpp"
#include "dl/progen.hpp"
#include "dl/vm.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw dl::DlError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct VmFlags {
  bool no_jit = false;
  bool deoptless = false;
  int deoptless_max = 5;
  int ctx_max_stack = 16;
  int ctx_max_env = 32;
  int inv_threshold = 10;
  int edge_threshold = 200;
  double force_fail_p = 0.0;
  uint64_t seed = 0;
  std::string stats;
  std::vector<std::string> trace;

  void attach(CLI::App* app) {
    app->add_flag("--no-jit", no_jit, "interpreter only");
    app->add_flag("--deoptless", deoptless,
                  "dispatch failed guards to specialized continuations");
    app->add_option("--deoptless-max", deoptless_max,
                    "continuations per exit (default 5)");
    app->add_option("--ctx-max-stack", ctx_max_stack,
                    "max stack slots in a deoptless context");
    app->add_option("--ctx-max-env", ctx_max_env,
                    "max locals in a deoptless context");
    app->add_option("--inv-threshold", inv_threshold,
                    "invocations before compiling (-1 never)");
    app->add_option("--edge-threshold", edge_threshold,
                    "back-edges before OSR-in (-1 never)");
    app->add_option("--force-fail-p", force_fail_p,
                    "probability of a forced guard failure");
    app->add_option("--seed", seed, "RNG seed");
    app->add_option("--stats", stats, "stats format after the run (json)");
    app->add_option("--trace", trace,
                    "trace categories: feedback, deopt, osr")
        ->delimiter(',');
  }

  dl::VmConfig config() const {
    dl::VmConfig cfg;
    cfg.jit = !no_jit;
    cfg.deoptless = deoptless;
    cfg.deoptless_max = deoptless_max;
    cfg.ctx_max_stack = ctx_max_stack;
    cfg.ctx_max_env = ctx_max_env;
    cfg.inv_threshold = inv_threshold;
    cfg.edge_threshold = edge_threshold;
    cfg.force_fail_p = force_fail_p;
    cfg.seed = seed;
    for (const std::string& t : trace) {
      if (t == "feedback") cfg.trace |= dl::kTraceFeedback;
      else if (t == "deopt") cfg.trace |= dl::kTraceDeopt;
      else if (t == "osr") cfg.trace |= dl::kTraceOsr;
      else throw CLI::ValidationError("--trace", "unknown category " + t);
    }
    return cfg;
  }
};

double median(std::vector<double> xs) {
  if (xs.empty()) return 0;
  std::sort(xs.begin(), xs.end());
  size_t n = xs.size();
  return n % 2 ? xs[n / 2] : (xs[n / 2 - 1] + xs[n / 2]) / 2;
}

// Median wall time of non-warmup iterations across executions.
double stable_median(const std::vector<dl::BenchRecord>& recs, int warmup) {
  std::vector<double> xs;
  for (const auto& r : recs)
    if (r.iteration >= warmup) xs.push_back((double)r.wall_ns);
  return median(xs);
}

int run_benchmarks(const std::string& which, int rows, int cols, int iters,
                   int execs, double p, uint64_t seed,
                   const std::string& csv_path,
                   std::vector<std::string> mode_names) {
  using dl::BenchMode;
  bool randfail = which == "randfail" || which == "all";

  std::vector<std::pair<dl::BenchSpec, std::vector<BenchMode>>> jobs;
  auto add = [&](dl::BenchSpec spec, std::vector<BenchMode> modes) {
    if (iters > 0)
      for (auto& ph : spec.phases) ph.iters = iters;
    if (execs > 0) spec.executions = execs;
    if (!mode_names.empty()) {
      modes.clear();
      for (const std::string& m : mode_names) {
        BenchMode bm;
        if (!dl::parse_bench_mode(m, bm))
          throw CLI::ValidationError("--modes", "unknown mode " + m);
        modes.push_back(bm);
      }
    }
    jobs.emplace_back(std::move(spec), std::move(modes));
  };

  if (which == "vector_sum" || which == "all")
    add(dl::bench_vector_sum(rows),
        {BenchMode::Interp, BenchMode::Deopt, BenchMode::Deoptless});
  if (which == "colsum" || which == "all")
    add(dl::bench_colsum(cols, rows),
        {BenchMode::Deopt, BenchMode::Deoptless});
  if (randfail)
    for (dl::BenchSpec& s : dl::randfail_suite())
      add(std::move(s), {BenchMode::Deopt, BenchMode::Deoptless});

  dl::BenchOptions opts;
  opts.seed = seed;
  if (randfail) opts.force_fail_p = p;

  std::vector<dl::BenchRecord> all_records;
  bool mismatch = false;
  struct Summary {
    std::map<std::string, std::vector<dl::BenchRecord>> by_mode;
    int warmup = 5;
  };
  std::map<std::string, Summary> summaries;

  for (auto& [spec, modes] : jobs) {
    std::string reference;
    bool have_ref = false;
    for (BenchMode mode : modes) {
      dl::BenchRun run = dl::run_bench(spec, mode, opts);
      if (!have_ref) {
        reference = run.output;
        have_ref = true;
      } else if (run.output != reference) {
        std::cerr << "transparency mismatch: " << spec.name << " in "
                  << dl::bench_mode_name(mode)
                  << " mode produced different output\n";
        mismatch = true;
      }
      Summary& s = summaries[spec.name];
      s.warmup = spec.warmup;
      auto& bucket = s.by_mode[dl::bench_mode_name(mode)];
      bucket.insert(bucket.end(), run.records.begin(), run.records.end());
      all_records.insert(all_records.end(), run.records.begin(),
                         run.records.end());
    }
  }

  std::printf("%-12s %-10s %14s %8s %8s %9s\n", "benchmark", "mode",
              "median_ns", "deopts", "hits", "compiles");
  for (const auto& [name, s] : summaries) {
    for (const auto& [mode, recs] : s.by_mode) {
      uint64_t deopts = 0, hits = 0, compiles = 0;
      for (const auto& r : recs) {
        deopts += r.deopt_count;
        hits += r.deoptless_hit;
        compiles += r.deoptless_compile;
      }
      std::printf("%-12s %-10s %14.0f %8llu %8llu %9llu\n", name.c_str(),
                  mode.c_str(), stable_median(recs, s.warmup),
                  (unsigned long long)deopts, (unsigned long long)hits,
                  (unsigned long long)compiles);
    }
  }

  // Deoptless-over-deopt speedups where both modes ran.
  double log_sum = 0;
  int log_n = 0;
  for (const auto& [name, s] : summaries) {
    auto d = s.by_mode.find("deopt");
    auto dl_ = s.by_mode.find("deoptless");
    if (d == s.by_mode.end() || dl_ == s.by_mode.end()) continue;
    double md = stable_median(d->second, s.warmup);
    double mdl = stable_median(dl_->second, s.warmup);
    if (mdl <= 0) continue;
    double speedup = md / mdl;
    std::printf("%-12s speedup deoptless/deopt = %.2fx\n", name.c_str(),
                speedup);
    log_sum += std::log(speedup);
    log_n++;
  }
  if (log_n > 1)
    std::printf("geomean speedup = %.2fx\n", std::exp(log_sum / log_n));

  if (!csv_path.empty()) dl::emit_csv(all_records, csv_path);
  return mismatch ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-tier VM for the DL vector language"};
  app.require_subcommand(1);

  // run
  auto* run_cmd = app.add_subcommand("run", "execute a DL program");
  std::string run_file;
  run_cmd->add_option("file", run_file, "program file")->required();
  VmFlags flags;
  flags.attach(run_cmd);

  // disasm
  auto* dis_cmd =
      app.add_subcommand("disasm", "lower a program and print its bytecode");
  std::string dis_file;
  dis_cmd->add_option("file", dis_file, "program file")->required();

  // compile
  auto* comp_cmd = app.add_subcommand(
      "compile",
      "run a program to gather feedback, then print the optimized IR of "
      "each function");
  std::string comp_file;
  comp_cmd->add_option("file", comp_file, "program file")->required();

  // gen
  auto* gen_cmd =
      app.add_subcommand("gen", "emit a seeded random test program");
  uint64_t gen_seed = 0;
  gen_cmd->add_option("seed", gen_seed, "generator seed")->required();

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "run benchmark experiments");
  std::string which;
  bench_cmd
      ->add_option("suite", which,
                   "vector_sum | colsum | randfail | all")
      ->required()
      ->check(CLI::IsMember({"vector_sum", "colsum", "randfail", "all"}));
  int rows = 100000, cols = 50, iters = 0, execs = 0;
  double p = 1e-4;
  uint64_t bench_seed = 1;
  std::string csv_path;
  std::vector<std::string> mode_names;
  bench_cmd->add_option("--rows", rows, "vector length / table rows");
  bench_cmd->add_option("--cols", cols, "table columns");
  bench_cmd->add_option("--iters", iters, "override iterations per phase");
  bench_cmd->add_option("--execs", execs, "override executions");
  bench_cmd->add_option("--p", p, "forced-failure probability (randfail)");
  bench_cmd->add_option("--seed", bench_seed, "RNG seed");
  bench_cmd->add_option("--csv", csv_path, "write records to a CSV file");
  bench_cmd->add_option("--modes", mode_names,
                        "comma-separated: interp,deopt,deoptless")
      ->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      dl::LoweredProgram prog = dl::lower(dl::parse(read_file(run_file)));
      dl::Vm vm(flags.config());
      vm.run_main(prog);
      if (flags.stats == "json") std::cout << vm.stats_json() << "\n";
      else if (!flags.stats.empty())
        throw CLI::ValidationError("--stats", "unknown format " + flags.stats);
      return 0;
    }
    if (*dis_cmd) {
      dl::LoweredProgram prog = dl::lower(dl::parse(read_file(dis_file)));
      for (const auto& fn : prog.fns) std::cout << disassemble(*fn) << "\n";
      return 0;
    }
    if (*comp_cmd) {
      dl::LoweredProgram prog = dl::lower(dl::parse(read_file(comp_file)));
      dl::VmConfig cfg;
      cfg.jit = false;  // gather feedback in the baseline tier
      std::ostringstream sink;
      cfg.out = &sink;
      dl::Vm vm(cfg);
      vm.run_main(prog);
      for (const auto& fn : prog.fns) {
        if (fn->id == 0) continue;
        dl::TranslateRequest req;
        req.fn = fn.get();
        req.entry_pc = 0;
        req.seed_locals.assign((size_t)fn->nlocals(), std::nullopt);
        for (int32_t pl : fn->param_locals)
          req.seed_locals[(size_t)pl] = dl::TypeTag::Any;
        try {
          dl::IRFunction ir = translate(vm, req, vm.state(fn.get()).feedback);
          optimize(ir);
          std::cout << dump_ir(ir) << "\n";
        } catch (const dl::CompileUnsupported& e) {
          std::cout << fn->name << ": not compiled (" << e.what() << ")\n\n";
        }
      }
      return 0;
    }
    if (*gen_cmd) {
      std::cout << dl::generate_program(gen_seed);
      return 0;
    }
    if (*bench_cmd)
      return run_benchmarks(which, rows, cols, iters, execs, p, bench_seed,
                            csv_path, mode_names);
  } catch (const dl::DlError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
