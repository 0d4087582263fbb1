#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace ignd {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class ZeroGradient : public Error {
 public:
  ZeroGradient() : Error("gradient has zero norm") {}
};

class NoConvergence : public Error {
 public:
  using Error::Error;
};

class SingularInnerMatrix : public Error {
 public:
  using Error::Error;
};

class DegenerateScale : public Error {
 public:
  using Error::Error;
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

class ZeroScale : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class SteppedTerminal : public Error {
 public:
  SteppedTerminal() : Error("step called on a terminal state") {}
};

class IndefiniteMaa : public Error {
 public:
  using Error::Error;
};

class Diverged : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class MissingColumn : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::size_t col, const std::string& what)
      : Error("parse error at row " + std::to_string(row) + ", column " + std::to_string(col) +
              ": " + what),
        row_(row),
        col_(col) {}

  std::size_t row() const { return row_; }
  std::size_t col() const { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

// Invalid experiment configuration; `field` is the dotted key path.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class AllRunsDiverged : public Error {
 public:
  AllRunsDiverged() : Error("every grid cell diverged") {}
};

}  // namespace ignd
