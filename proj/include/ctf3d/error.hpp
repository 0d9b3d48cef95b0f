#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ctf3d {

/// Broad failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  invalid_argument,
  io,
  parse,
  config,
  missing_input,
  numerical,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Malformed input file. Carries the byte offset where decoding failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : Error(ErrorKind::parse, what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace ctf3d
