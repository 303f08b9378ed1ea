#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace advlab {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input, bad files, violated contracts. CLI exit code 1.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Numeric failures at run time (non-finite gradients, diverged training). CLI exit code 2.
class NumericError : public Error {
public:
    using Error::Error;
};

/// An experiment cannot proceed for a reason found at run time (e.g. a model
/// zoo whose members are indistinguishable). CLI exit code 2.
class ExperimentError : public Error {
public:
    using Error::Error;
};

class DimensionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class IndexError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ContractError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class LookupError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class RangeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class StructureError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ConflictError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class VersionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Malformed binary or text input. `position` is a byte offset for binary
/// formats and a 1-based line number for line-oriented formats.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& what, std::size_t position)
        : ValidationError(what), position_(position) {}

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// A row that parses but breaks a record invariant. Carries the 1-based line.
class ConsistencyError : public ValidationError {
public:
    ConsistencyError(const std::string& what, std::size_t line)
        : ValidationError(what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class TrainingDivergedError : public NumericError {
public:
    TrainingDivergedError(const std::string& what, std::size_t epoch)
        : NumericError(what), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

/// Non-finite value encountered inside an iterative attack.
class AttackNumericError : public NumericError {
public:
    AttackNumericError(const std::string& what, int iteration)
        : NumericError(what), iteration_(iteration) {}

    int iteration() const noexcept { return iteration_; }

private:
    int iteration_;
};

} // namespace advlab
