#pragma once

#include <stdexcept>
#include <string>

namespace flowcent {

/// Bad input: violated precondition, malformed configuration, dimension mismatch.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// A numerical procedure could not deliver its contract (non-convergence,
/// overflow, step-size underflow, disconnected graph, ...).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

}  // namespace flowcent
