#pragma once

#include <stdexcept>
#include <string>

namespace coseg {

// Violated precondition on an API call (bad dimensions, empty input, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed text input; carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
        source_(source),
        line_(line) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

// Binary artifact decoding failures.
class DecodeError : public std::runtime_error {
 public:
  enum class Kind { kBadMagic, kUnsupportedVersion, kTruncated, kMalformed };

  DecodeError(Kind kind, const std::string& what)
      : std::runtime_error(std::string(kind_name(kind)) + ": " + what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

  static const char* kind_name(Kind k) noexcept {
    switch (k) {
      case Kind::kBadMagic: return "bad magic";
      case Kind::kUnsupportedVersion: return "unsupported version";
      case Kind::kTruncated: return "truncated";
      case Kind::kMalformed: return "malformed";
    }
    return "decode error";
  }

 private:
  Kind kind_;
};

// Training produced a NaN/Inf loss.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t iteration, double loss)
      : std::runtime_error("non-finite loss " + std::to_string(loss) + " at iteration " +
                           std::to_string(iteration)),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace coseg
