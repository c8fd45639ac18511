#include "dl/typing.hpp"

namespace dl {

namespace {

using enum TypeTag;

bool leq(TypeTag a, TypeTag b) { return subtype(a, b); }

}  // namespace

TypeTag binop_type(BinOp op, TypeTag a, TypeTag b) {
  if (a == Any || b == Any || a == Closure || b == Closure) return Any;
  // Bool operands raise; no result to type.
  if (leq(a, BoolVec) || leq(b, BoolVec)) return Any;

  bool scalar = leq(a, NumScalar) && leq(b, NumScalar);
  if (op == BinOp::Eq || op == BinOp::Lt || op == BinOp::Le)
    return scalar ? BoolScalar : BoolVec;

  if (a == GenVec || b == GenVec) return GenVec;
  if (op == BinOp::Div) return scalar ? FloatScalar : FloatVec;

  bool both_int = leq(a, IntVec) && leq(b, IntVec);
  bool both_concrete = (leq(a, IntVec) || leq(a, FloatVec)) &&
                       (leq(b, IntVec) || leq(b, FloatVec));
  if (both_int) return scalar ? IntScalar : IntVec;
  if (both_concrete) return scalar ? FloatScalar : FloatVec;
  return scalar ? NumScalar : NumVec;
}

TypeTag index_get_type(TypeTag vec) {
  if (leq(vec, IntVec)) return IntScalar;
  if (leq(vec, FloatVec)) return FloatScalar;
  if (leq(vec, NumVec)) return NumScalar;
  if (leq(vec, BoolVec)) return BoolScalar;
  return Any;  // GenVec elements, or unknown/raising cases
}

TypeTag index_set_type(TypeTag vec, TypeTag val) {
  if (vec == GenVec) return GenVec;
  if (vec == Any || vec == Closure || val == Any || val == Closure)
    return Any;
  if (leq(vec, IntVec)) {
    if (leq(val, IntScalar)) return IntVec;
    if (leq(val, FloatScalar)) return FloatVec;
    if (leq(val, NumScalar)) return NumVec;
    return GenVec;
  }
  if (leq(vec, FloatVec)) return leq(val, NumScalar) ? FloatVec : GenVec;
  if (leq(vec, NumVec)) return leq(val, NumScalar) ? NumVec : GenVec;
  if (leq(vec, BoolVec)) return leq(val, BoolScalar) ? BoolVec : GenVec;
  return Any;
}

TypeTag concat_type(const std::vector<TypeTag>& parts) {
  if (parts.empty()) return IntVec;
  bool all_int = true, all_concrete = true, all_num = true, all_bool = true;
  for (TypeTag t : parts) {
    if (t == Any) return Any;
    if (!leq(t, IntVec)) all_int = false;
    if (!leq(t, IntVec) && !leq(t, FloatVec)) all_concrete = false;
    if (!leq(t, NumVec)) all_num = false;
    if (!leq(t, BoolVec)) all_bool = false;
  }
  if (all_int) return IntVec;
  if (all_concrete) return FloatVec;
  if (all_num) return NumVec;
  if (all_bool) return BoolVec;
  return GenVec;
}

}  // namespace dl
