#pragma once

#include <stdexcept>
#include <string>

namespace braintim {

// Every failure the library raises derives from Error. The CLI maps the three
// families below onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exit code 1: caller supplied a bad configuration or argument.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class InvalidSchedule : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class InvalidArgument : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class InvalidFilter : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class UnsupportedRatio : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class InvalidInterval : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class IndexError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class InvalidLabel : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class StateError : public Error {
 public:
  using Error::Error;
};

// Exit code 2: on-disk data is missing or malformed.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

class BadMagic : public ParseError {
 public:
  using ParseError::ParseError;
};

class UnsupportedVersion : public ParseError {
 public:
  using ParseError::ParseError;
};

class TruncatedStream : public ParseError {
 public:
  using ParseError::ParseError;
};

// Exit code 3: training produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace braintim
