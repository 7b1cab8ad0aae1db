#pragma once

#include <stdexcept>
#include <string>

namespace almostcomm {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NotHermitian : public Error {
 public:
  using Error::Error;
};

class NotUnitary : public Error {
 public:
  using Error::Error;
};

class EigensolverFailure : public Error {
 public:
  using Error::Error;
};

/// A function handed to the functional calculus returned a non-finite value.
class FunctionUndefined : public Error {
 public:
  using Error::Error;
};

class QuadratureFailure : public Error {
 public:
  using Error::Error;
};

class LinSolverFailure : public Error {
 public:
  using Error::Error;
};

class SandwichViolation : public Error {
 public:
  using Error::Error;
};

class MonotonicityViolation : public Error {
 public:
  using Error::Error;
};

class BlockNormViolation : public Error {
 public:
  using Error::Error;
};

class SpectralGapMissing : public Error {
 public:
  using Error::Error;
};

class DegenerateMeasure : public Error {
 public:
  using Error::Error;
};

class MomentInfeasible : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace almostcomm
