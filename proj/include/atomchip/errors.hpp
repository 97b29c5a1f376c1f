#pragma once

#include <stdexcept>
#include <string>

namespace atomchip {

// Base of every error the toolkit throws on purpose. Anything else escaping
// the library is a bug.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file could not be read or written.
class IoError : public Error { using Error::Error; };

class IncompatibleUnits : public Error { using Error::Error; };
class UnknownUnit : public Error { using Error::Error; };

class ParseError : public Error {
 public:
  ParseError(std::string where, const std::string& what, int line = 0)
      : Error(format(where, what, line)), where_(std::move(where)), line_(line) {}

  const std::string& where() const { return where_; }
  int line() const { return line_; }

 private:
  static std::string format(const std::string& where, const std::string& what, int line) {
    std::string s = "parse error";
    if (line > 0) s += " at line " + std::to_string(line);
    if (!where.empty()) s += " (" + where + ")";
    return s + ": " + what;
  }
  std::string where_;
  int line_;
};

class MissingField : public ParseError { using ParseError::ParseError; };

class UnknownLayout : public Error { using Error::Error; };
class UnknownSequence : public Error { using Error::Error; };

class OnConductor : public Error { using Error::Error; };
class DegenerateMagnitude : public Error { using Error::Error; };

class NoConvergence : public Error { using Error::Error; };
class EscapedDomain : public Error { using Error::Error; };
class NotAMinimum : public Error { using Error::Error; };
class NoBarrier : public Error { using Error::Error; };

class TimeOutOfRange : public Error { using Error::Error; };
class RegimeMismatch : public Error { using Error::Error; };
class TimestepTooLarge : public Error { using Error::Error; };

}  // namespace atomchip
