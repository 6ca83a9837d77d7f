#pragma once

#include <stdexcept>
#include <string>

namespace crossdose {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments or violated preconditions (shapes, ranges, specs).
class ValidationError : public Error {
public:
  using Error::Error;
};

/// A file exists but does not follow the expected on-disk layout.
class FormatError : public Error {
public:
  FormatError(std::string field, const std::string& what)
      : Error("format error in field '" + field + "': " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

/// Filesystem read/write failure.
class IoError : public Error {
public:
  using Error::Error;
};

/// An operation was called on an object that does not support it, or with
/// inputs that this kind of object does not take.
class UsageError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

/// Non-finite values during training.
class NumericError : public Error {
public:
  using Error::Error;
};

/// An artifact produced by an earlier pipeline stage is missing.
class MissingPrerequisite : public Error {
public:
  using Error::Error;
};

}  // namespace crossdose
