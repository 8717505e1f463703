#pragma once

#include <stdexcept>
#include <string>

namespace sdpm {

// Base of every error the library throws. The CLI maps subclasses to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

// Malformed or inconsistent schema / config.
struct SchemaError : Error {
  explicit SchemaError(const std::string& msg) : Error("schema: " + msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};

// Bad data file content; row is 1-based over data rows (header excluded), -1 if n/a.
struct ParseError : Error {
  ParseError(const std::string& msg, long row, std::string column)
      : Error(format(msg, row, column)), row(row), column(std::move(column)) {}
  long row;
  std::string column;

 private:
  static std::string format(const std::string& msg, long row, const std::string& col) {
    std::string s = "parse: " + msg;
    if (row >= 0) s += " (row " + std::to_string(row);
    if (!col.empty()) s += (row >= 0 ? ", column " : " (column ") + col;
    if (row >= 0 || !col.empty()) s += ")";
    return s;
  }
};

// Chain / schema mismatch between a fit and a later use of it.
struct CompatibilityError : Error {
  explicit CompatibilityError(const std::string& msg) : Error("compatibility: " + msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error("numeric: " + msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io: " + msg) {}
};

}  // namespace sdpm
