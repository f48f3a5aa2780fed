#pragma once

#include <stdexcept>
#include <string>

namespace drqkd {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Truncated norm fell below the construction bound for the requested cutoff.
struct CutoffTooSmall : Error {
  using Error::Error;
};

/// Requested photon number exceeds the cutoff.
struct InvalidPhotonNumber : Error {
  using Error::Error;
};

/// Operands built with different cutoffs.
struct CutoffMismatch : Error {
  using Error::Error;
};

/// A unitary pushed more probability mass past the cutoff than tolerated.
struct CutoffOverflow : Error {
  using Error::Error;
};

/// Mode counts or tensor shapes do not line up.
struct ShapeMismatch : Error {
  using Error::Error;
};

/// Argument outside the mathematical domain of the formula.
struct DomainError : Error {
  using Error::Error;
};

/// Probe-overlap ratio denominator vanished.
struct DegenerateDenominator : Error {
  using Error::Error;
};

/// Statistics requested over an empty record list.
struct EmptySession : Error {
  using Error::Error;
};

/// Configuration failed schema validation.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace drqkd
