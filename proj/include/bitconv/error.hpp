#pragma once

#include <stdexcept>
#include <string>

namespace bitconv {

enum class ErrorCode {
  Shape,
  Index,
  Argument,
  Parse,
  Format,
  Io,
  Numeric,
  Internal,
};

/// Base of every exception thrown by the library. The code survives the trip
/// across the C boundary as a status value.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& m) : Error(ErrorCode::Shape, m) {}
};

class IndexError : public Error {
 public:
  explicit IndexError(const std::string& m) : Error(ErrorCode::Index, m) {}
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& m) : Error(ErrorCode::Argument, m) {}
};

class ParseError : public Error {
 public:
  ParseError(int line, const std::string& m)
      : Error(ErrorCode::Parse, "line " + std::to_string(line) + ": " + m), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& m) : Error(ErrorCode::Format, m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error(ErrorCode::Io, m) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& m) : Error(ErrorCode::Numeric, m) {}
};

}  // namespace bitconv
