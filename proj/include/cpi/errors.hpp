#pragma once

#include <stdexcept>
#include <string>

namespace cpi {

// Base of every error thrown by the library. `kind()` is a short stable tag
// used by the CLI for machine-parsable error lines.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "shape"; }
};

class NumericError : public Error {
 public:
  NumericError(const std::string& what, long iteration = -1)
      : Error(what), iteration_(iteration) {}
  const char* kind() const noexcept override { return "numeric"; }
  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

class IngestError : public Error {
 public:
  IngestError(const std::string& what, long row = -1, std::string column = {})
      : Error(what), row_(row), column_(std::move(column)) {}
  const char* kind() const noexcept override { return "ingest"; }
  long row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  long row_;
  std::string column_;
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

}  // namespace cpi
