#pragma once

#include <stdexcept>
#include <string>

namespace hmarl {

// Base class for every error this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Vector/matrix width or shape disagreement.
struct DimensionError : Error {
  using Error::Error;
};

// A required graph input was not bound before forward().
struct MissingInputError : Error {
  using Error::Error;
};

// Operation called in a state that does not admit it (backward before
// forward, stepping a finished episode, ...).
struct StateError : Error {
  using Error::Error;
};

// Two graphs that must be structurally identical are not.
struct StructureError : Error {
  using Error::Error;
};

// A goal refers to an object the observation does not contain.
struct ReferenceError : Error {
  using Error::Error;
};

// Concurrent/joint data is not time-aligned across agents.
struct AlignmentError : Error {
  using Error::Error;
};

// A buffer holds fewer items than a sample request needs.
struct UnderfullError : Error {
  using Error::Error;
};

// Bad configuration value, unknown key, malformed map file.
struct ConfigError : Error {
  using Error::Error;
};

// Filesystem-level failure (missing file, short read, ...).
struct IoError : Error {
  using Error::Error;
};

// Empty batch or otherwise unusable argument.
struct ArgumentError : Error {
  using Error::Error;
};

}  // namespace hmarl
