#pragma once

#include <stdexcept>
#include <string>

namespace pdmis {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class NonFiniteDensity : public Error {
 public:
  using Error::Error;
};

class InvalidSize : public Error {
 public:
  using Error::Error;
};

class NotAPartition : public Error {
 public:
  using Error::Error;
};

class NonFiniteWeight : public Error {
 public:
  using Error::Error;
};

class AllWeightsZero : public Error {
 public:
  using Error::Error;
};

class ScheduleInvalid : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pdmis
