#pragma once

#include <stdexcept>
#include <string>

namespace heavytail {

/// Root of every exception the library throws.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (u outside (0,1), lambda <= 0, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Input of the wrong length or layout.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Model-level errors: the model cannot be used with the requested operation.
class ModelError : public Error {
public:
  using Error::Error;
};

class UnsupportedModelError : public ModelError {
public:
  using ModelError::ModelError;
};

class ReferenceNotHeaviestError : public ModelError {
public:
  using ModelError::ModelError;
};

class UnsupportedPairError : public ModelError {
public:
  using ModelError::ModelError;
};

class DominanceError : public ModelError {
public:
  using ModelError::ModelError;
};

class PropositionInapplicableError : public ModelError {
public:
  using ModelError::ModelError;
};

/// Numerical failure: singular designs, fits that do not support the expected conclusion.
class NumericError : public Error {
public:
  using Error::Error;
};

class RankError : public NumericError {
public:
  using NumericError::NumericError;
};

}  // namespace heavytail
