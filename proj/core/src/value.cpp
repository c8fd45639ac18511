#include "dl/value.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <sstream>

#include "dl/bytecode.hpp"

namespace dl {

namespace {

struct Lattice {
  // leq[a][b] == true iff a <: b.
  std::array<std::array<bool, kNumTypeTags>, kNumTypeTags> leq{};
  std::array<std::array<TypeTag, kNumTypeTags>, kNumTypeTags> join{};
  std::array<int, kNumTypeTags> depth{};

  Lattice() {
    using enum TypeTag;
    const std::pair<TypeTag, TypeTag> hasse[] = {
        {IntScalar, IntVec},    {IntVec, NumVec},     {FloatScalar, FloatVec},
        {FloatVec, NumVec},     {IntScalar, NumScalar}, {FloatScalar, NumScalar},
        {NumScalar, NumVec},    {NumVec, Any},        {BoolScalar, BoolVec},
        {BoolVec, Any},         {GenVec, Any},        {Closure, Any},
    };
    for (int i = 0; i < kNumTypeTags; i++) leq[i][i] = true;
    for (auto [a, b] : hasse) leq[(int)a][(int)b] = true;
    // Transitive closure.
    for (int k = 0; k < kNumTypeTags; k++)
      for (int i = 0; i < kNumTypeTags; i++)
        for (int j = 0; j < kNumTypeTags; j++)
          if (leq[i][k] && leq[k][j]) leq[i][j] = true;
    // Least upper bound: the unique minimal common upper bound.
    for (int a = 0; a < kNumTypeTags; a++) {
      for (int b = 0; b < kNumTypeTags; b++) {
        int best = (int)Any;
        for (int c = 0; c < kNumTypeTags; c++)
          if (leq[a][c] && leq[b][c] && leq[c][best]) best = c;
        join[a][b] = (TypeTag)best;
      }
    }
    for (int a = 0; a < kNumTypeTags; a++) depth[a] = depth_of(a);
  }

  // Longest chain of strict supertypes from `a` up to Any.
  int depth_of(int a) const {
    int best = 0;
    for (int b = 0; b < kNumTypeTags; b++)
      if (b != a && leq[a][b]) best = std::max(best, 1 + depth_of(b));
    return best;
  }
};

const Lattice& lattice() {
  static Lattice l;
  return l;
}

}  // namespace

bool subtype(TypeTag a, TypeTag b) { return lattice().leq[(int)a][(int)b]; }
TypeTag lub(TypeTag a, TypeTag b) { return lattice().join[(int)a][(int)b]; }
int lattice_depth(TypeTag t) { return lattice().depth[(int)t]; }

const char* tag_name(TypeTag t) {
  switch (t) {
    case TypeTag::IntScalar: return "IntScalar";
    case TypeTag::IntVec: return "IntVec";
    case TypeTag::FloatScalar: return "FloatScalar";
    case TypeTag::FloatVec: return "FloatVec";
    case TypeTag::NumScalar: return "NumScalar";
    case TypeTag::NumVec: return "NumVec";
    case TypeTag::BoolScalar: return "BoolScalar";
    case TypeTag::BoolVec: return "BoolVec";
    case TypeTag::GenVec: return "GenVec";
    case TypeTag::Closure: return "Closure";
    case TypeTag::Any: return "Any";
  }
  return "?";
}

std::ostream& operator<<(std::ostream& os, TypeTag t) {
  return os << tag_name(t);
}

const Value::IntVecP& Value::empty_int() {
  static IntVecP empty = std::make_shared<std::vector<int64_t>>();
  return empty;
}

Value Value::int_scalar(int64_t v) {
  return Value(std::make_shared<std::vector<int64_t>>(1, v));
}
Value Value::float_scalar(double v) {
  return Value(std::make_shared<std::vector<double>>(1, v));
}
Value Value::bool_scalar(bool v) {
  return Value(std::make_shared<std::vector<uint8_t>>(1, uint8_t(v)));
}
Value Value::int_vec(std::vector<int64_t> v) {
  return Value(std::make_shared<std::vector<int64_t>>(std::move(v)));
}
Value Value::float_vec(std::vector<double> v) {
  return Value(std::make_shared<std::vector<double>>(std::move(v)));
}
Value Value::bool_vec(std::vector<uint8_t> v) {
  return Value(std::make_shared<std::vector<uint8_t>>(std::move(v)));
}
Value Value::gen_vec(std::vector<Value> v) {
  return Value(std::make_shared<std::vector<Value>>(std::move(v)));
}
Value Value::closure(const BytecodeFunction* fn) {
  return Value(ClosureRef{fn});
}

int64_t Value::length() const {
  return std::visit(
      [](const auto& r) -> int64_t {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, ClosureRef>)
          return 1;
        else
          return (int64_t)r->size();
      },
      rep_);
}

TypeTag type_of(const Value& v) {
  if (v.is_int()) return v.length() == 1 ? TypeTag::IntScalar : TypeTag::IntVec;
  if (v.is_float())
    return v.length() == 1 ? TypeTag::FloatScalar : TypeTag::FloatVec;
  if (v.is_bool())
    return v.length() == 1 ? TypeTag::BoolScalar : TypeTag::BoolVec;
  if (v.is_gen()) return TypeTag::GenVec;
  return TypeTag::Closure;
}

const char* binop_name(BinOp op) {
  switch (op) {
    case BinOp::Add: return "+";
    case BinOp::Sub: return "-";
    case BinOp::Mul: return "*";
    case BinOp::Div: return "/";
    case BinOp::Eq: return "==";
    case BinOp::Lt: return "<";
    case BinOp::Le: return "<=";
  }
  return "?";
}

std::string render_double(double d) {
  if (std::isnan(d)) return "nan";
  if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), d);
  return std::string(buf, res.ptr);
}

void Value::render(std::ostream& os) const {
  if (is_int()) {
    os << "int[";
    const auto& v = ints();
    for (size_t i = 0; i < v.size(); i++) os << (i ? ", " : "") << v[i];
    os << "]";
  } else if (is_float()) {
    os << "float[";
    const auto& v = floats();
    for (size_t i = 0; i < v.size(); i++)
      os << (i ? ", " : "") << render_double(v[i]);
    os << "]";
  } else if (is_bool()) {
    os << "bool[";
    const auto& v = bools();
    for (size_t i = 0; i < v.size(); i++)
      os << (i ? ", " : "") << (v[i] ? "true" : "false");
    os << "]";
  } else if (is_gen()) {
    os << "gen[";
    const auto& v = gens();
    for (size_t i = 0; i < v.size(); i++) {
      if (i) os << ", ";
      v[i].render(os);
    }
    os << "]";
  } else {
    os << "closure:" << closure_ref().fn->name;
  }
}

std::string Value::render() const {
  std::ostringstream ss;
  render(ss);
  return ss.str();
}

bool Value::identical(const Value& other) const {
  if (rep_.index() != other.rep_.index()) return false;
  if (is_int()) return ints() == other.ints();
  if (is_bool()) return bools() == other.bools();
  if (is_float()) {
    const auto& a = floats();
    const auto& b = other.floats();
    if (a.size() != b.size()) return false;
    // Bit-identical comparison so NaN == NaN and 0.0 != -0.0.
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
  }
  if (is_gen()) {
    const auto& a = gens();
    const auto& b = other.gens();
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); i++)
      if (!a[i].identical(b[i])) return false;
    return true;
  }
  return closure_ref() == other.closure_ref();
}

namespace {

[[noreturn]] void arith_type_error(const Value& v) {
  throw TypeError(std::string("non-numeric operand '") + tag_name(type_of(v)) +
                  "' to arithmetic/comparison");
}

// Broadcast-aware element counts. Returns result length; throws LengthError.
int64_t result_length(const Value& a, const Value& b) {
  int64_t la = a.length(), lb = b.length();
  if (la == lb) return la;
  if (la == 1) return lb;
  if (lb == 1) return la;
  throw LengthError("operand lengths " + std::to_string(la) + " and " +
                    std::to_string(lb) + " differ and neither is scalar");
}

Value gen_element(const Value& v, int64_t i) {
  // Element of a (possibly broadcast) operand, boxed as a scalar Value.
  int64_t idx = v.length() == 1 ? 0 : i;
  if (v.is_int()) return Value::int_scalar(v.ints()[idx]);
  if (v.is_float()) return Value::float_scalar(v.floats()[idx]);
  if (v.is_bool()) return Value::bool_scalar(v.bools()[idx] != 0);
  return v.gens()[idx];
}

double as_double_elem(const Value& v, int64_t i) {
  int64_t idx = v.length() == 1 ? 0 : i;
  if (v.is_int()) return (double)v.ints()[idx];
  return v.floats()[idx];
}

int64_t as_int_elem(const Value& v, int64_t i) {
  int64_t idx = v.length() == 1 ? 0 : i;
  return v.ints()[idx];
}

bool is_arith(BinOp op) { return op <= BinOp::Div; }

}  // namespace

Value binop(BinOp op, const Value& a, const Value& b) {
  if (a.is_closure() || b.is_closure()) {
    arith_type_error(a.is_closure() ? a : b);
  }
  if (a.is_bool() || b.is_bool()) {
    arith_type_error(a.is_bool() ? a : b);
  }
  int64_t n = result_length(a, b);
  if (a.is_gen() || b.is_gen()) {
    if (is_arith(op)) {
      std::vector<Value> out;
      out.reserve((size_t)n);
      for (int64_t i = 0; i < n; i++)
        out.push_back(binop(op, gen_element(a, i), gen_element(b, i)));
      return Value::gen_vec(std::move(out));
    }
    std::vector<uint8_t> out;
    out.reserve((size_t)n);
    for (int64_t i = 0; i < n; i++) {
      Value r = binop(op, gen_element(a, i), gen_element(b, i));
      if (r.length() != 1)
        throw TypeError("comparison of nested non-scalar elements");
      out.push_back(uint8_t(r.bool1()));
    }
    return Value::bool_vec(std::move(out));
  }

  bool any_float = a.is_float() || b.is_float();
  switch (op) {
    case BinOp::Add:
    case BinOp::Sub:
    case BinOp::Mul: {
      if (!any_float) {
        std::vector<int64_t> out((size_t)n);
        for (int64_t i = 0; i < n; i++) {
          int64_t x = as_int_elem(a, i), y = as_int_elem(b, i);
          out[(size_t)i] = op == BinOp::Add   ? wrap_add(x, y)
                           : op == BinOp::Sub ? wrap_sub(x, y)
                                              : wrap_mul(x, y);
        }
        return Value::int_vec(std::move(out));
      }
      std::vector<double> out((size_t)n);
      for (int64_t i = 0; i < n; i++) {
        double x = as_double_elem(a, i), y = as_double_elem(b, i);
        out[(size_t)i] = op == BinOp::Add   ? x + y
                         : op == BinOp::Sub ? x - y
                                            : x * y;
      }
      return Value::float_vec(std::move(out));
    }
    case BinOp::Div: {
      // Division always produces floats, including int / int.
      std::vector<double> out((size_t)n);
      for (int64_t i = 0; i < n; i++)
        out[(size_t)i] = as_double_elem(a, i) / as_double_elem(b, i);
      return Value::float_vec(std::move(out));
    }
    case BinOp::Eq:
    case BinOp::Lt:
    case BinOp::Le: {
      std::vector<uint8_t> out((size_t)n);
      if (!any_float) {
        for (int64_t i = 0; i < n; i++) {
          int64_t x = as_int_elem(a, i), y = as_int_elem(b, i);
          out[(size_t)i] = op == BinOp::Eq   ? x == y
                           : op == BinOp::Lt ? x < y
                                             : x <= y;
        }
      } else {
        for (int64_t i = 0; i < n; i++) {
          double x = as_double_elem(a, i), y = as_double_elem(b, i);
          out[(size_t)i] = op == BinOp::Eq   ? x == y
                           : op == BinOp::Lt ? x < y
                                             : x <= y;
        }
      }
      return Value::bool_vec(std::move(out));
    }
  }
  arith_type_error(a);
}

int64_t index_to_int(const Value& i) {
  if (i.length() != 1 || !(i.is_int() || i.is_float()))
    throw TypeError("index must be a numeric scalar, got " +
                    std::string(tag_name(type_of(i))));
  if (i.is_int()) return i.int1();
  double d = i.float1();
  if (!(d >= -9.2e18 && d <= 9.2e18))
    throw BoundsError("index " + render_double(d) + " out of range");
  return (int64_t)d;  // truncation toward zero
}

Value index_get1(const Value& v, int64_t i) {
  if (v.is_closure()) throw TypeError("cannot index a closure");
  int64_t len = v.length();
  if (i < 1 || i > len)
    throw BoundsError("index " + std::to_string(i) +
                      " out of bounds for vector of length " +
                      std::to_string(len));
  size_t idx = (size_t)(i - 1);
  if (v.is_int()) return Value::int_scalar(v.ints()[idx]);
  if (v.is_float()) return Value::float_scalar(v.floats()[idx]);
  if (v.is_bool()) return Value::bool_scalar(v.bools()[idx] != 0);
  return v.gens()[idx];
}

Value index_get(const Value& v, const Value& i) {
  return index_get1(v, index_to_int(i));
}

namespace {

template <class T>
std::shared_ptr<std::vector<T>> writable(
    const std::shared_ptr<std::vector<T>>& p) {
  if (p.use_count() == 1) return p;
  return std::make_shared<std::vector<T>>(*p);
}

std::vector<Value> boxed_elements(const Value& v) {
  std::vector<Value> out;
  int64_t n = v.length();
  out.reserve((size_t)n);
  for (int64_t i = 1; i <= n; i++) out.push_back(index_get1(v, i));
  return out;
}

}  // namespace

Value index_set1(const Value& v, int64_t i, const Value& x) {
  if (v.is_closure()) throw TypeError("cannot index a closure");
  int64_t len = v.length();
  if (i < 1 || i > len + 1)
    throw BoundsError("index " + std::to_string(i) +
                      " out of bounds for assignment into vector of length " +
                      std::to_string(len));
  size_t idx = (size_t)(i - 1);
  bool append = i == len + 1;

  if (v.is_int() && x.is_int() && x.length() == 1) {
    auto p = writable(std::get<Value::IntVecP>(v.rep_));
    if (append)
      p->push_back(x.int1());
    else
      (*p)[idx] = x.int1();
    return Value(Value::Rep(std::move(p)));
  }
  if (v.is_float() && (x.is_float() || x.is_int()) && x.length() == 1) {
    auto p = writable(std::get<Value::FloatVecP>(v.rep_));
    double d = x.is_int() ? (double)x.int1() : x.float1();
    if (append)
      p->push_back(d);
    else
      (*p)[idx] = d;
    return Value(Value::Rep(std::move(p)));
  }
  if (v.is_int() && x.is_float() && x.length() == 1) {
    // Storing a float into an int vector promotes the whole vector.
    std::vector<double> out(v.ints().begin(), v.ints().end());
    if (append)
      out.push_back(x.float1());
    else
      out[idx] = x.float1();
    return Value::float_vec(std::move(out));
  }
  if (v.is_bool() && x.is_bool() && x.length() == 1) {
    auto p = writable(std::get<Value::BoolVecP>(v.rep_));
    if (append)
      p->push_back(uint8_t(x.bool1()));
    else
      (*p)[idx] = uint8_t(x.bool1());
    return Value(Value::Rep(std::move(p)));
  }
  if (v.is_gen()) {
    auto p = writable(std::get<Value::GenVecP>(v.rep_));
    if (append)
      p->push_back(x);
    else
      (*p)[idx] = x;
    return Value(Value::Rep(std::move(p)));
  }
  // Any other mismatch: degrade to a generic vector of boxed elements.
  std::vector<Value> out = boxed_elements(v);
  if (append)
    out.push_back(x);
  else
    out[idx] = x;
  return Value::gen_vec(std::move(out));
}

Value index_set(const Value& v, const Value& i, const Value& x) {
  return index_set1(v, index_to_int(i), x);
}

void Value::set_int_elem(int64_t i, int64_t x) {
  auto& p = std::get<IntVecP>(rep_);
  if (p.use_count() > 1) rep_ = std::make_shared<std::vector<int64_t>>(*p);
  auto& q = std::get<IntVecP>(rep_);
  if (i == (int64_t)q->size() + 1)
    q->push_back(x);
  else
    (*q)[(size_t)(i - 1)] = x;
}

void Value::set_float_elem(int64_t i, double x) {
  auto& p = std::get<FloatVecP>(rep_);
  if (p.use_count() > 1) rep_ = std::make_shared<std::vector<double>>(*p);
  auto& q = std::get<FloatVecP>(rep_);
  if (i == (int64_t)q->size() + 1)
    q->push_back(x);
  else
    (*q)[(size_t)(i - 1)] = x;
}

void Value::set_bool_elem(int64_t i, bool x) {
  auto& p = std::get<BoolVecP>(rep_);
  if (p.use_count() > 1) rep_ = std::make_shared<std::vector<uint8_t>>(*p);
  auto& q = std::get<BoolVecP>(rep_);
  if (i == (int64_t)q->size() + 1)
    q->push_back(uint8_t(x));
  else
    (*q)[(size_t)(i - 1)] = uint8_t(x);
}

void Value::set_gen_elem(int64_t i, Value x) {
  auto& p = std::get<GenVecP>(rep_);
  if (p.use_count() > 1) rep_ = std::make_shared<std::vector<Value>>(*p);
  auto& q = std::get<GenVecP>(rep_);
  if (i == (int64_t)q->size() + 1)
    q->push_back(std::move(x));
  else
    (*q)[(size_t)(i - 1)] = std::move(x);
}

Value concat(const std::vector<Value>& parts) {
  bool all_int = true, all_num = true, all_bool = true;
  for (const Value& p : parts) {
    if (p.is_closure() || p.is_gen()) {
      all_int = all_num = all_bool = false;
      break;
    }
    if (!p.is_int()) all_int = false;
    if (!p.is_int() && !p.is_float()) all_num = false;
    if (!p.is_bool()) all_bool = false;
  }
  if (parts.empty() || all_int) {
    std::vector<int64_t> out;
    for (const Value& p : parts)
      out.insert(out.end(), p.ints().begin(), p.ints().end());
    return Value::int_vec(std::move(out));
  }
  if (all_num) {
    std::vector<double> out;
    for (const Value& p : parts) {
      if (p.is_int())
        out.insert(out.end(), p.ints().begin(), p.ints().end());
      else
        out.insert(out.end(), p.floats().begin(), p.floats().end());
    }
    return Value::float_vec(std::move(out));
  }
  if (all_bool) {
    std::vector<uint8_t> out;
    for (const Value& p : parts)
      out.insert(out.end(), p.bools().begin(), p.bools().end());
    return Value::bool_vec(std::move(out));
  }
  std::vector<Value> out;
  for (const Value& p : parts) {
    if (p.is_closure()) {
      out.push_back(p);
    } else {
      auto elems = boxed_elements(p);
      out.insert(out.end(), elems.begin(), elems.end());
    }
  }
  return Value::gen_vec(std::move(out));
}

}  // namespace dl
