#pragma once

#include <stdexcept>
#include <string>

namespace peepll {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wire-level failure. `code()` is the value carried in an Error message:
/// "malformed", "protocol", "capacity", "mode".
class ProtocolError : public Error {
 public:
  ProtocolError(std::string code, const std::string& detail)
      : Error(code + ": " + detail), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class CapacityError : public ProtocolError {
 public:
  explicit CapacityError(const std::string& detail) : ProtocolError("capacity", detail) {}
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class SnapshotError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CryptoError : public Error {
 public:
  using Error::Error;
};

}  // namespace peepll
