#pragma once

#include <stdexcept>
#include <string>

namespace srt2 {

// Bad configuration or argument values. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Inconsistent or unreadable data (grid mismatch, malformed files, missing series,
// failed ROI detection). Maps to CLI exit code 3.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatError : public DataError {
public:
    using DataError::DataError;
};

class DetectionError : public DataError {
public:
    DetectionError(const std::string& what, int found) : DataError(what), found_(found) {}
    int found() const { return found_; }

private:
    int found_;
};

// Non-finite values inside an iterative solver. Maps to CLI exit code 4.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, int iteration)
        : std::runtime_error(what), iteration_(iteration) {}
    int iteration() const { return iteration_; }

private:
    int iteration_;
};

}  // namespace srt2
