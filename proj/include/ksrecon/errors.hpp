#pragma once

#include <stdexcept>
#include <string>

namespace ksr {

// Solver state left the admissible range (non-finite or |u| beyond the
// blow-up threshold). Carries the step index where it happened when known.
class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(const std::string& what, long step_index = -1)
      : std::runtime_error(what), step_index(step_index) {}
  long step_index;
};

// Spectral coefficients violate the conjugate-symmetry layout required for
// a real inverse transform.
class SymmetryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidFieldError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ksr
