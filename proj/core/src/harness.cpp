#include <chrono>
#include <fstream>
#include <sstream>

#include "dl/harness.hpp"
#include "dl/parse.hpp"

namespace dl {

const char* bench_mode_name(BenchMode m) {
  switch (m) {
    case BenchMode::Interp: return "interp";
    case BenchMode::Deopt: return "deopt";
    case BenchMode::Deoptless: return "deoptless";
  }
  return "?";
}

bool parse_bench_mode(const std::string& s, BenchMode& out) {
  if (s == "interp") out = BenchMode::Interp;
  else if (s == "deopt") out = BenchMode::Deopt;
  else if (s == "deoptless") out = BenchMode::Deoptless;
  else return false;
  return true;
}

VmConfig bench_config(BenchMode mode, const BenchOptions& opts) {
  VmConfig cfg;
  cfg.jit = mode != BenchMode::Interp;
  cfg.deoptless = mode == BenchMode::Deoptless;
  cfg.force_fail_p = opts.force_fail_p;
  cfg.seed = opts.seed;
  return cfg;
}

BenchRun run_bench(const BenchSpec& spec, BenchMode mode,
                   const BenchOptions& opts) {
  BenchRun out;
  for (int exec = 0; exec < spec.executions; exec++) {
    std::ostringstream cap;
    VmConfig cfg = bench_config(mode, opts);
    cfg.out = &cap;
    LoweredProgram prog = lower(parse(spec.source));
    Vm vm(cfg);
    vm.run_main(prog);

    const Value* entry = vm.get_global(spec.entry);
    if (!entry || !entry->is_closure())
      throw DlError("benchmark " + spec.name + " defines no function '" +
                    spec.entry + "'");
    const BytecodeFunction* fn = entry->closure_ref().fn;

    int iter = 0;
    VmStats prev = vm.stats;
    bool failed = false;
    for (const BenchPhase& phase : spec.phases) {
      for (const auto& [name, v] : phase.globals) vm.set_global(name, v);
      for (int i = 0; i < phase.iters && !failed; i++) {
        auto t0 = std::chrono::steady_clock::now();
        try {
          Value r = vm.call(fn, {});
          cap << r.render() << "\n";
        } catch (const DlError& e) {
          cap << "error: " << e.what() << "\n";
          failed = true;
        }
        auto wall = std::chrono::steady_clock::now() - t0;
        const VmStats& cur = vm.stats;
        BenchRecord rec;
        rec.benchmark = spec.name;
        rec.mode = bench_mode_name(mode);
        rec.execution = exec;
        rec.iteration = iter++;
        rec.wall_ns = (uint64_t)std::chrono::duration_cast<
                          std::chrono::nanoseconds>(wall)
                          .count();
        rec.deopt_count = cur.deopt_count - prev.deopt_count;
        rec.deoptless_hit = cur.deoptless_hit - prev.deoptless_hit;
        rec.deoptless_compile = cur.deoptless_compile - prev.deoptless_compile;
        rec.compile_ns = cur.compile_ns - prev.compile_ns;
        prev = cur;
        out.records.push_back(std::move(rec));
      }
      if (failed) break;
    }
    out.output += cap.str();
  }
  return out;
}

// ---- shipped benchmarks -------------------------------------------------

namespace {

Value int_data(int len) {
  std::vector<int64_t> v((size_t)len);
  for (int i = 0; i < len; i++) v[(size_t)i] = i % 7 + 1;
  return Value::int_vec(std::move(v));
}

Value float_data(int len) {
  std::vector<double> v((size_t)len);
  for (int i = 0; i < len; i++) v[(size_t)i] = (i % 7) * 0.5 + 0.25;
  return Value::float_vec(std::move(v));
}

Value mixed_data(int len) {
  std::vector<Value> v((size_t)len);
  for (int i = 0; i < len; i++)
    v[(size_t)i] = i % 2 == 0 ? Value::int_scalar(i % 7 + 1)
                              : Value::float_scalar((i % 7) * 0.5 + 0.25);
  return Value::gen_vec(std::move(v));
}

const char* kVectorSumSource = R"(sum <- function() {
  total <- 0
  for (i in 1:length) total <- total + data[[i]]
  total
}
)";

const char* kColsumSource = R"(f <- function(colIndex, t) {
  dataCol <- t[[colIndex]]
  res <- 0
  for (i in 1:length(dataCol)) res <- res + dataCol[[i]]
  res
}
columnwiseSum <- function(t) {
  res <- c()
  for (i in 1L:cols) res[[i]] <- f(i, t)
  res
}
run <- function() {
  s <- columnwiseSum(t)
  total <- 0
  for (i in 1:cols) total <- total + s[[i]]
  total
}
runcol <- function() {
  f(colIndex, t)
}
)";

const char* kNbodySource = R"(run <- function() {
  acc <- 0.0
  for (i in 1:n) {
    for (j in 1:n) {
      dx <- px[[i]] - px[[j]]
      dy <- py[[i]] - py[[j]]
      d2 <- dx * dx + dy * dy + 0.5
      acc <- acc + m[[j]] / d2
    }
  }
  acc
}
)";

const char* kMandelbrotSource = R"(run <- function() {
  count <- 0
  for (p in 1:npix) {
    cx <- cxs[[p]]
    cy <- cys[[p]]
    x <- 0.0
    y <- 0.0
    inside <- 0
    for (k in 1:maxiter) {
      nx <- x * x - y * y + cx
      ny <- 2.0 * x * y + cy
      x <- nx
      y <- ny
      if (x * x + y * y <= 4.0) inside <- inside + 1
    }
    count <- count + inside
  }
  count
}
)";

const char* kPrefixSumSource = R"(run <- function() {
  res <- c()
  acc <- 0
  for (i in 1:n) {
    acc <- acc + data[[i]]
    res[[i]] <- acc
  }
  res[[n]]
}
)";

std::vector<std::pair<std::string, Value>> colsum_globals(int cols,
                                                          int rows) {
  std::vector<Value> table((size_t)cols);
  for (int c = 0; c < cols; c++)
    table[(size_t)c] = c % 2 == 0 ? int_data(rows) : float_data(rows);
  return {{"cols", Value::int_scalar(cols)},
          {"t", Value::gen_vec(std::move(table))}};
}

std::vector<std::pair<std::string, Value>> nbody_globals(int bodies) {
  std::vector<double> px((size_t)bodies), py((size_t)bodies),
      m((size_t)bodies);
  for (int i = 0; i < bodies; i++) {
    px[(size_t)i] = (i % 13) * 0.7 + 0.1;
    py[(size_t)i] = (i % 11) * 0.9 + 0.2;
    m[(size_t)i] = (i % 5) * 0.25 + 1.0;
  }
  return {{"n", Value::int_scalar(bodies)},
          {"px", Value::float_vec(std::move(px))},
          {"py", Value::float_vec(std::move(py))},
          {"m", Value::float_vec(std::move(m))}};
}

std::vector<std::pair<std::string, Value>> mandelbrot_globals(int side,
                                                              int max_iter) {
  int npix = side * side;
  std::vector<double> cxs((size_t)npix), cys((size_t)npix);
  for (int r = 0; r < side; r++)
    for (int c = 0; c < side; c++) {
      cxs[(size_t)(r * side + c)] = -2.0 + 2.5 * c / (side - 1);
      cys[(size_t)(r * side + c)] = -1.2 + 2.4 * r / (side - 1);
    }
  return {{"npix", Value::int_scalar(npix)},
          {"maxiter", Value::int_scalar(max_iter)},
          {"cxs", Value::float_vec(std::move(cxs))},
          {"cys", Value::float_vec(std::move(cys))}};
}

}  // namespace

BenchSpec bench_vector_sum(int len) {
  BenchSpec s;
  s.name = "vector_sum";
  s.source = kVectorSumSource;
  s.entry = "sum";
  s.executions = 3;
  s.phases = {
      {{{"length", Value::int_scalar(len)}, {"data", int_data(len)}}, 5},
      {{{"data", float_data(len)}}, 5},
      {{{"data", mixed_data(len)}}, 5},
      {{{"data", float_data(len)}}, 5},
  };
  return s;
}

// One iteration per column: each phase advances colIndex, so records carry
// the per-call timing of `f` as its argument type alternates.
BenchSpec bench_colsum(int cols, int rows) {
  BenchSpec s;
  s.name = "colsum";
  s.source = kColsumSource;
  s.entry = "runcol";
  s.executions = 10;
  s.phases.push_back({colsum_globals(cols, rows), 0});
  for (int c = 1; c <= cols; c++)
    s.phases.push_back({{{"colIndex", Value::int_scalar(c)}}, 1});
  return s;
}

BenchSpec bench_nbody(int bodies) {
  BenchSpec s;
  s.name = "nbody";
  s.source = kNbodySource;
  s.executions = 3;
  s.phases = {{nbody_globals(bodies), 5}};
  return s;
}

BenchSpec bench_mandelbrot(int side, int max_iter) {
  BenchSpec s;
  s.name = "mandelbrot";
  s.source = kMandelbrotSource;
  s.executions = 3;
  s.phases = {{mandelbrot_globals(side, max_iter), 5}};
  return s;
}

BenchSpec bench_prefix_sum(int len) {
  BenchSpec s;
  s.name = "prefix_sum";
  s.source = kPrefixSumSource;
  s.executions = 3;
  s.phases = {
      {{{"n", Value::int_scalar(len)}, {"data", int_data(len)}}, 5}};
  return s;
}

std::vector<BenchSpec> randfail_suite() {
  auto single_phase = [](BenchSpec s, int iters) {
    for (auto& p : s.phases) p.iters = iters;
    s.executions = 3;
    return s;
  };
  BenchSpec vs;
  vs.name = "vector_sum";
  vs.source = kVectorSumSource;
  vs.entry = "sum";
  vs.executions = 3;
  vs.phases = {{{{"length", Value::int_scalar(4000)},
                 {"data", float_data(4000)}},
                30}};
  // Whole-table passes for colsum here: one iteration = one columnwiseSum.
  BenchSpec cs;
  cs.name = "colsum";
  cs.source = kColsumSource;
  cs.executions = 3;
  cs.phases = {{colsum_globals(10, 1000), 30}};
  return {
      std::move(vs),
      std::move(cs),
      single_phase(bench_nbody(50), 30),
      single_phase(bench_mandelbrot(40, 30), 30),
      single_phase(bench_prefix_sum(4000), 30),
  };
}

// ---- CSV ----------------------------------------------------------------

static const char* kCsvHeader =
    "benchmark,mode,execution,iteration,wall_ns,deopt_count,deoptless_hit,"
    "deoptless_compile,compile_ns";

void emit_csv(const std::vector<BenchRecord>& records,
              const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DlError("cannot open " + path + " for writing");
  f << kCsvHeader << "\n";
  for (const BenchRecord& r : records)
    f << r.benchmark << ',' << r.mode << ',' << r.execution << ','
      << r.iteration << ',' << r.wall_ns << ',' << r.deopt_count << ','
      << r.deoptless_hit << ',' << r.deoptless_compile << ',' << r.compile_ns
      << "\n";
  f.flush();
  if (!f) throw DlError("failed writing " + path);
}

std::vector<BenchRecord> read_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DlError("cannot open " + path + " for reading");
  std::string line;
  if (!std::getline(f, line) || line != kCsvHeader)
    throw DlError("unexpected CSV header in " + path);
  std::vector<BenchRecord> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9)
      throw DlError("malformed CSV row in " + path + ": " + line);
    BenchRecord r;
    r.benchmark = cells[0];
    r.mode = cells[1];
    r.execution = std::stoi(cells[2]);
    r.iteration = std::stoi(cells[3]);
    r.wall_ns = std::stoull(cells[4]);
    r.deopt_count = std::stoull(cells[5]);
    r.deoptless_hit = std::stoull(cells[6]);
    r.deoptless_compile = std::stoull(cells[7]);
    r.compile_ns = std::stoull(cells[8]);
    out.push_back(std::move(r));
  }
  return out;
}

// ---- differential-run driver --------------------------------------------

RunResult run_program_source(const std::string& source, VmConfig cfg) {
  std::ostringstream cap;
  cfg.out = &cap;
  // The program outlives the VM: per-function state and globals point into
  // it until the VM is destroyed.
  LoweredProgram prog;
  Vm vm(cfg);
  try {
    prog = lower(parse(source));
    vm.run_main(prog);
  } catch (const DlError& e) {
    cap << "error: " << e.what() << "\n";
  }
  RunResult res;
  res.output = cap.str();
  res.stats = vm.stats;
  return res;
}

}  // namespace dl
