#pragma once

#include <stdexcept>
#include <string>

namespace dl {

// Runtime errors raised by program evaluation. Both tiers funnel through the
// same raising code in the baseline interpreter, so messages are identical no
// matter which tier detected the condition first.
struct DlError : std::runtime_error {
  explicit DlError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TypeError : DlError {
  explicit TypeError(const std::string& msg) : DlError("type error: " + msg) {}
};

struct BoundsError : DlError {
  explicit BoundsError(const std::string& msg)
      : DlError("bounds error: " + msg) {}
};

struct LengthError : DlError {
  explicit LengthError(const std::string& msg)
      : DlError("length error: " + msg) {}
};

struct MissingError : DlError {
  explicit MissingError(const std::string& name)
      : DlError("missing value: variable '" + name + "' used before assignment") {}
};

struct SyntaxError : DlError {
  int line;
  int col;
  SyntaxError(int line, int col, const std::string& msg)
      : DlError("syntax error at " + std::to_string(line) + ":" +
                std::to_string(col) + ": " + msg),
        line(line),
        col(col) {}
};

struct LowerError : DlError {
  explicit LowerError(const std::string& msg) : DlError("lower error: " + msg) {}
};

// Thrown by the optimizer when it declines a compilation unit. The caller
// stays in the baseline tier; this is not a user-visible error.
struct CompileUnsupported : std::runtime_error {
  explicit CompileUnsupported(const std::string& msg)
      : std::runtime_error(msg) {}
};

}  // namespace dl
