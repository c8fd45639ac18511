#pragma once

#include <string>

#include "dl/ast.hpp"

namespace dl {

// Parses DL source text. Throws SyntaxError with line/column on malformed
// input.
Program parse(const std::string& source);

}  // namespace dl
