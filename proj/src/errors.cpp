#include "edgemoe/errors.hpp"

#include <utility>

namespace edgemoe {

namespace {

std::string format_parse(const std::string& source, std::size_t line, const std::string& detail) {
  if (line == 0) return source + ": " + detail;
  return source + ":" + std::to_string(line) + ": " + detail;
}

}  // namespace

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& detail)
    : Error(format_parse(source, line, detail)), line_(line) {}

DigestMismatch::DigestMismatch(const std::string& artifact, std::string expected, std::string actual)
    : Error(artifact + " config digest mismatch: expected " + expected + ", found " + actual),
      expected_(std::move(expected)),
      actual_(std::move(actual)) {}

}  // namespace edgemoe
