// SPDX-License-Identifier: Apache-2.0
/**
 * @file   error.hpp
 * @brief  Exception hierarchy shared by every comprnn module.
 *
 * All library failures derive from comprnn::Error. The CLI maps any Error to
 * exit code 1 and reserves exit code 2 for usage problems.
 */
#pragma once

#include <stdexcept>
#include <string>

namespace comprnn {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Shapes of two operands do not agree.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// A value that must be finite was NaN or infinite.
class NonFiniteError : public Error {
public:
  using Error::Error;
};

/// Malformed input data (TSV rows, labels, vocabularies).
class DataError : public Error {
public:
  using Error::Error;
};

/// Unreadable, corrupt or incompatible checkpoint / bundle files.
class FormatError : public Error {
public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
  using Error::Error;
};

} // namespace comprnn
