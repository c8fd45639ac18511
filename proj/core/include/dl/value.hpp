#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "dl/error.hpp"

namespace dl {

struct BytecodeFunction;

// The finite type lattice used for feedback, deoptimization contexts and
// specialization. NumScalar/NumVec/Any only arise from lub, never from
// type_of.
enum class TypeTag : uint8_t {
  IntScalar,
  IntVec,
  FloatScalar,
  FloatVec,
  NumScalar,
  NumVec,
  BoolScalar,
  BoolVec,
  GenVec,
  Closure,
  Any,
};
inline constexpr int kNumTypeTags = 11;

bool subtype(TypeTag a, TypeTag b);
TypeTag lub(TypeTag a, TypeTag b);
// Length of the longest chain from `t` up to Any. Any has depth 0.
int lattice_depth(TypeTag t);
const char* tag_name(TypeTag t);
std::ostream& operator<<(std::ostream& os, TypeTag t);

struct ClosureRef {
  const BytecodeFunction* fn = nullptr;
  bool operator==(const ClosureRef&) const = default;
};

// A dynamically typed runtime value. Every value is a vector; a scalar is a
// vector of length one. Vectors have value semantics: index_set never mutates
// storage visible through another Value (copy-on-write).
class Value {
 public:
  using IntVecP = std::shared_ptr<std::vector<int64_t>>;
  using FloatVecP = std::shared_ptr<std::vector<double>>;
  using BoolVecP = std::shared_ptr<std::vector<uint8_t>>;
  using GenVecP = std::shared_ptr<std::vector<Value>>;

  Value() : rep_(empty_int()) {}

  static Value int_scalar(int64_t v);
  static Value float_scalar(double v);
  static Value bool_scalar(bool v);
  static Value int_vec(std::vector<int64_t> v);
  static Value float_vec(std::vector<double> v);
  static Value bool_vec(std::vector<uint8_t> v);
  static Value gen_vec(std::vector<Value> v);
  static Value closure(const BytecodeFunction* fn);

  bool is_int() const { return std::holds_alternative<IntVecP>(rep_); }
  bool is_float() const { return std::holds_alternative<FloatVecP>(rep_); }
  bool is_bool() const { return std::holds_alternative<BoolVecP>(rep_); }
  bool is_gen() const { return std::holds_alternative<GenVecP>(rep_); }
  bool is_closure() const { return std::holds_alternative<ClosureRef>(rep_); }

  const std::vector<int64_t>& ints() const { return *std::get<IntVecP>(rep_); }
  const std::vector<double>& floats() const {
    return *std::get<FloatVecP>(rep_);
  }
  const std::vector<uint8_t>& bools() const {
    return *std::get<BoolVecP>(rep_);
  }
  const std::vector<Value>& gens() const { return *std::get<GenVecP>(rep_); }
  ClosureRef closure_ref() const { return std::get<ClosureRef>(rep_); }

  int64_t length() const;
  bool is_scalar() const { return length() == 1; }

  // Scalar accessors; callers must have checked the representation.
  int64_t int1() const { return ints()[0]; }
  double float1() const { return floats()[0]; }
  bool bool1() const { return bools()[0] != 0; }

  // Typed element stores with index_set1 semantics for the matching layout:
  // copy-on-write, append allowed at length()+1. The representation must
  // match (is_int() etc.) and i must be in [1, length()+1]; callers check.
  void set_int_elem(int64_t i, int64_t x);
  void set_float_elem(int64_t i, double x);
  void set_bool_elem(int64_t i, bool x);
  void set_gen_elem(int64_t i, Value x);

  void render(std::ostream& os) const;
  std::string render() const;

  bool identical(const Value& other) const;

 private:
  using Rep = std::variant<IntVecP, FloatVecP, BoolVecP, GenVecP, ClosureRef>;
  explicit Value(Rep rep) : rep_(std::move(rep)) {}
  static const IntVecP& empty_int();

  Rep rep_;

  friend Value index_set(const Value&, const Value&, const Value&);
  friend Value index_set1(const Value& v, int64_t i, const Value& x);
};

TypeTag type_of(const Value& v);

enum class BinOp : uint8_t { Add, Sub, Mul, Div, Eq, Lt, Le };
const char* binop_name(BinOp op);

// Shared semantics of primitive operations, used identically by both tiers.
Value binop(BinOp op, const Value& a, const Value& b);

Value index_get(const Value& v, const Value& i);
Value index_set(const Value& v, const Value& i, const Value& x);

// Index already checked to be a scalar and truncated; still bounds-checked.
Value index_get1(const Value& v, int64_t i);
Value index_set1(const Value& v, int64_t i, const Value& x);

// Converts a scalar index value to int64 (1-based); throws TypeError if the
// value is not a numeric scalar. Floats are truncated toward zero.
int64_t index_to_int(const Value& i);

// Wrapping 64-bit integer arithmetic, shared between the interpreter and the
// emitted typed instructions.
inline int64_t wrap_add(int64_t a, int64_t b) {
  return static_cast<int64_t>(static_cast<uint64_t>(a) +
                              static_cast<uint64_t>(b));
}
inline int64_t wrap_sub(int64_t a, int64_t b) {
  return static_cast<int64_t>(static_cast<uint64_t>(a) -
                              static_cast<uint64_t>(b));
}
inline int64_t wrap_mul(int64_t a, int64_t b) {
  return static_cast<int64_t>(static_cast<uint64_t>(a) *
                              static_cast<uint64_t>(b));
}

std::string render_double(double d);

// Concatenation semantics of the c(...) builtin: one level of flattening with
// numeric promotion; any non-uniform mix degrades to GenVec of boxed scalars.
Value concat(const std::vector<Value>& parts);

}  // namespace dl
