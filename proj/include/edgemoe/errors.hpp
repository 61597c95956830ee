#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace edgemoe {

// Base class for every error raised by the library. The CLI maps the
// subclasses onto process exit codes (ConfigError/ParseError/DigestMismatch
// -> 2, InfeasibleError -> 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user input: bad config, out-of-range parameter, unknown name.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed file content. `line()` is 1-based; 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& detail);

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// An artifact (trace, plan, profile, probe set) was built for a different
// model configuration than the one it is being used with.
class DigestMismatch : public Error {
 public:
  DigestMismatch(const std::string& artifact, std::string expected, std::string actual);

  const std::string& expected() const noexcept { return expected_; }
  const std::string& actual() const noexcept { return actual_; }

 private:
  std::string expected_;
  std::string actual_;
};

// The request is well-formed but cannot be satisfied: memory budget below the
// resident minimum, unbalanceable trace catalog, eviction deadlock.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

}  // namespace edgemoe
