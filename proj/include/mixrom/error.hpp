#pragma once

#include <stdexcept>
#include <string>

namespace mixrom {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: malformed configuration, mismatched dimensions, out-of-range values.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A numerical procedure failed (factorization breakdown, degenerate fit, ...).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// An iterative solver hit its iteration cap before meeting its tolerance.
class NonConvergence : public NumericalError {
public:
    NonConvergence(const std::string& what, double residual)
        : NumericalError(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}

    [[nodiscard]] double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// File-system or format problems while reading/writing artifacts.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace mixrom
