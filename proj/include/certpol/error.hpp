#pragma once
// Exception types shared by every module. The CLI maps them to exit codes:
// configuration/usage problems exit 2, everything else exits 1.

#include <cstddef>
#include <stdexcept>
#include <string>

namespace certpol {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration (fractions, tolerances, flags).
struct ConfigError : Error {
  using Error::Error;
};

// A dataset or policy does not match the declared covariate schema.
struct SchemaError : ConfigError {
  using ConfigError::ConfigError;
};

// Malformed value in a data row. `row` is 1-based and excludes the header.
struct ParseError : Error {
  ParseError(std::size_t row, const std::string& what)
      : Error("row " + std::to_string(row) + ": " + what), row(row) {}
  std::size_t row;
};

struct ArgumentError : Error {
  using Error::Error;
};

struct DomainError : Error {
  using Error::Error;
};

// Exhaustive enumeration would exceed its candidate budget.
struct CapacityError : Error {
  using Error::Error;
};

// A quantity is undefined on the given input (e.g. nobody treated).
struct DegenerateError : Error {
  using Error::Error;
};

}  // namespace certpol
