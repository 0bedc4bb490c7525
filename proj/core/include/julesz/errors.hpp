#pragma once

#include <stdexcept>
#include <string>

namespace julesz {

/// Operand shapes do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input outside an operation's mathematical domain (ln/sqrt of non-positive
/// values, division by zero).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A NaN or Inf appeared where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Misuse of the differentiation graph (non-scalar loss, repeated backward).
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed or mismatched file content.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace julesz
