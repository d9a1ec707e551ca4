#pragma once

#include <stdexcept>
#include <string>

namespace longit {

// Malformed input: bad CSV cells, unknown terms, invalid flag combinations.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// A fit or algorithm could not produce a usable answer (separation,
// singular information, non-convergence).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace longit
