#pragma once

#include <stdexcept>
#include <string>

namespace voxsync {

/// Process exit codes reported by the CLI; each error family maps to one.
enum class ErrorCode : int {
  kInput = 2,
  kFormat = 3,
  kDigest = 4,
  kConfig = 5,
  kNumeric = 6,
  kContract = 7,
  kIo = 8,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorCode::kInput, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorCode::kFormat, what) {}
};

class DigestError : public Error {
 public:
  explicit DigestError(const std::string& what) : Error(ErrorCode::kDigest, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCode::kConfig, what) {}
};

// Non-finite gradients, divergence.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCode::kNumeric, what) {}
};

// API misuse such as a stale forward cache.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorCode::kContract, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::kIo, what) {}
};

}  // namespace voxsync
