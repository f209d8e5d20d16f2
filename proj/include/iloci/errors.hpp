#pragma once

#include <stdexcept>
#include <string>

namespace iloci {

/// Broad failure classes; the CLI maps each to its own exit code.
enum class ErrorKind {
  config,     // bad or missing configuration
  data,       // unreadable, malformed or missing input data
  numerical,  // training or recognition diverged
  contract,   // caller violated a precondition
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct CorpusIncompleteError : DataError {
  using DataError::DataError;
};

struct ParseError : DataError {
  ParseError(const std::string& file, std::size_t line, const std::string& why)
      : DataError(file + ":" + std::to_string(line) + ": " + why) {}
};

struct DegenerateInputError : DataError {
  using DataError::DataError;
};

struct CorruptFileError : DataError {
  using DataError::DataError;
};

struct VersionMismatchError : DataError {
  using DataError::DataError;
};

struct DivergenceError : Error {
  explicit DivergenceError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

struct IkFailureError : Error {
  explicit IkFailureError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

struct ContractError : Error {
  explicit ContractError(const std::string& what) : Error(ErrorKind::contract, what) {}
};

}  // namespace iloci
