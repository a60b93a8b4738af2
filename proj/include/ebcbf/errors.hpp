#pragma once

#include <stdexcept>
#include <string>

namespace ebcbf {

// Exit codes used by the command-line front end.
enum class ExitCode : int {
    kOk = 0,
    kInputError = 1,
    kNumericalError = 2,
    kInfeasible = 3,
};

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual ExitCode exit_code() const noexcept = 0;
};

/// Malformed arguments: dimension or shape mismatch, bad timestamps, bad config.
class InputError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::kInputError; }
};

/// Query against an object that is not ready (e.g. an unfitted model).
class StateError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::kInputError; }
};

/// Factorization failure, non-finite values, covariance far from PSD.
class NumericalError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::kNumericalError; }
};

/// Active barrier constraint whose input direction vanishes.
class DegeneracyError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::kInfeasible; }
};

/// Empty intersection of the input box and the barrier half-space.
class InfeasibilityError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::kInfeasible; }
};

}  // namespace ebcbf
