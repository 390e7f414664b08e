#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace coalgp {

// Malformed input text; `position` is the 0-based character offset where parsing failed.
class Parse_error : public std::runtime_error {
 public:
  Parse_error(const std::string& what, std::size_t position)
      : std::runtime_error{what + " (at character " + std::to_string(position) + ")"},
        position_{position} {}

  auto position() const -> std::size_t { return position_; }

 private:
  std::size_t position_;
};

// Well-formed input that violates a model invariant (tied heights, inconsistent dates, ...).
class Validation_error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical evaluation failed (quadrature, non-positive-definite configuration, ...).
class Evaluation_error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A simulator gave up (proposal cap, bound violation, inversion failure).
class Simulation_error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace coalgp
