#pragma once

#include <stdexcept>
#include <string>

namespace mwc {

// Error taxonomy shared by the library and the CLI. The CLI maps each
// class to a distinct exit code.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad arguments / preconditions violated by the caller.
struct UsageError : Error {
    using Error::Error;
};

// Malformed input files.
struct FormatError : Error {
    using Error::Error;
};

// A numerical procedure failed (no convergence, degenerate input).
struct NumericalError : Error {
    using Error::Error;
};

// A configured cost cap would be exceeded (tuple blow-up, scan size).
struct CostGuardError : Error {
    using Error::Error;
};

}  // namespace mwc
