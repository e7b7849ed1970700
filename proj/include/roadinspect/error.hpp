#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace roadinspect {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Pixel-format decoding failures.
class FormatError : public Error {
 public:
  enum class Kind { BadMagic, UnsupportedMaxval, Truncated, MalformedHeader };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class EmptyRectError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

// Text-format errors carry the offending file (may be empty) and 1-based line.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& msg)
      : Error(format(file, line, msg)), file_(std::move(file)), line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& file, std::size_t line, const std::string& msg) {
    std::string out = file.empty() ? std::string("line ") : file + ":";
    return out + std::to_string(line) + ": " + msg;
  }

  std::string file_;
  std::size_t line_;
};

class ModelFormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class TooFewSamples : public Error {
 public:
  using Error::Error;
};

class SingleClassTrainingSet : public Error {
 public:
  using Error::Error;
};

}  // namespace roadinspect
