#pragma once

#include <cstdint>
#include <string>

namespace dl {

// Deterministic random DL program for differential testing. Generated
// programs terminate (bounded loops, no recursion), assign every variable
// before use, index vectors in bounds by construction, and print results so
// runs can be compared byte-for-byte across execution modes.
std::string generate_program(uint64_t seed);

}  // namespace dl
