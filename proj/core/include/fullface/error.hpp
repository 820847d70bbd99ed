#pragma once

#include <stdexcept>
#include <string>

namespace fullface {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data or configuration violates a documented contract
/// (malformed manifest row, out-of-range config value, missing seed).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Geometry that admits no well-defined answer: reference point at the
/// camera origin, head x-axis parallel to the viewing ray, singular matrices.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Gaze ray does not reach the screen plane.
class NoIntersectionError : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

/// Tensor or layer shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written, or decoded.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fullface
