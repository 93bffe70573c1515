#pragma once

#include <stdexcept>
#include <string>

namespace dat {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes do not line up; message names both shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractViolation : public Error {
public:
    using Error::Error;
};

// A computation produced NaN/Inf where a finite value is required.
class NumericError : public Error {
public:
    using Error::Error;
};

// Training diverged; message names the epoch.
class TrainingFailure : public Error {
public:
    TrainingFailure(const std::string& what, std::size_t epoch)
        : Error(what), epoch_(epoch) {}
    std::size_t epoch() const { return epoch_; }

private:
    std::size_t epoch_;
};

// Malformed input document (IDX stream, model JSON, ...).
class ParseError : public Error {
public:
    enum class Kind { BadMagic, Truncated, CountMismatch, BadDocument };

    ParseError(Kind kind, const std::string& what, std::string path = {})
        : Error(what), kind_(kind), path_(std::move(path)) {}
    Kind kind() const { return kind_; }
    // Path to the offending field for document errors, e.g. "layers[1].weights[2]".
    const std::string& path() const { return path_; }

private:
    Kind kind_;
    std::string path_;
};

// Threshold calibration cannot distinguish the score lists at all.
class DegenerateCalibration : public Error {
public:
    using Error::Error;
};

}  // namespace dat
