#pragma once

#include <stdexcept>
#include <string>

namespace gcvae {

/// Operand shapes do not satisfy an operation's shape rule.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside an operation's mathematical domain (log of 0, pixels outside [0,1], ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Caller broke a documented precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed file contents (bad magic, unparsable header, missing member).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File payload shorter than its header promises, or counts that disagree.
class LengthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Well-formed data with unexpected contents (e.g. factor cardinalities).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedVariant : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A score that has no defined value for the given input (e.g. modularity with no informative code).
class UndefinedScore : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gcvae
