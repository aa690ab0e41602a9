#pragma once

#include <stdexcept>
#include <string>

namespace eegnorm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid input: shapes, parameters, non-finite data, bad config values.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Filesystem failures (cannot open, short write).
class IoError : public Error {
public:
    using Error::Error;
};

/// Recording file with a wrong magic tag or malformed header.
class FormatError : public Error {
public:
    using Error::Error;
};

class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};

class TruncatedError : public FormatError {
public:
    using FormatError::FormatError;
};

/// Raised under DegeneracyPolicy::Error when a scale statistic is ~0.
class DegenerateScaleError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ValidationError(what);
}

}  // namespace eegnorm
