#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rtb {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid profile, scenario, or attack description.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operation not permitted in the current device or writer state.
class StateError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public Error {
 public:
  using Error::Error;
};

class ConnectionError : public Error {
 public:
  using Error::Error;
};

/// Parse failure; `where` is a 1-based line number for text formats or a
/// byte offset for binary ones.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t where)
      : Error(what), where_(where) {}
  std::size_t where() const noexcept { return where_; }

 private:
  std::size_t where_;
};

}  // namespace rtb
