#pragma once

#include "dl/value.hpp"

namespace dl {

// Static typing rules for the primitive operations, shared by the optimizer
// and the feedback inference pass. All rules are sound over-approximations:
// for any values a, b with type_of(a) <: ta and type_of(b) <: tb, the type of
// the (non-raising) result is a subtype of the predicted tag.

TypeTag binop_type(BinOp op, TypeTag a, TypeTag b);
TypeTag index_get_type(TypeTag vec);
TypeTag index_set_type(TypeTag vec, TypeTag val);
TypeTag concat_type(const std::vector<TypeTag>& parts);

}  // namespace dl
