#pragma once

#include <stdexcept>
#include <string>

namespace inftucker {

// Operand shapes do not agree (mode sizes, ranks, list lengths).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A multi-index component lies outside its mode.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Eigendecomposition failure, non-finite densities, unusable statistics.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed tensor, model or config file. The message names the line when
// one is known.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values or a request the library refuses to serve
// (oracle size caps, unfitted models, single-class AUC input).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace inftucker
