#pragma once

#include <stdexcept>
#include <string>

namespace hsic {

/// Precondition violations (shape mismatches, empty inputs, bad config).
struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Data that is structurally valid but unusable (e.g. all points identical).
struct DegenerateData : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical failures (indefinite Gram factorization, diverged training).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// File-format problems; message carries path and, where known, line number.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace hsic
