/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace dmasum {

// Operand shapes do not conform.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values, non-convergence, or a domain violation in numerics.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An object was used in a state that does not allow the call.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Caller supplied arguments outside the documented domain.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A rank correlation has no defined value (zero variance / all ties).
class UndefinedCoefficientError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Dataset or checkpoint file could not be read or validated.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Writing an artifact to disk failed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dmasum
