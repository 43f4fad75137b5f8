#ifndef KEYFOIL_ERRORS_HPP
#define KEYFOIL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace keyfoil {

/// Unknown or duplicated axis name.
class AxisError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed arguments: overlapping axis sets, bad shapes, bad sizes.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A pmf whose entries are negative or whose total drifted more than 1e-9 from 1.
class NormalizationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The requested program has no feasible point (lossless with R < H(X),
/// the blind-adversary program at zero key, ...).
class InfeasibleError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A tractability or memory guard refused the request.
class GuardError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Problem-file parse or validation failure.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace keyfoil

#endif  // KEYFOIL_ERRORS_HPP
