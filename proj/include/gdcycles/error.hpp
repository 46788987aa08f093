#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gdcycles {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input text; carries the 1-based line number (0 when not line-specific).
struct ParseError : Error {
    ParseError(std::size_t at_line, const std::string& what)
        : Error(at_line ? "line " + std::to_string(at_line) + ": " + what : what), line(at_line) {}
    std::size_t line;
};

// The data cannot support the requested computation: separable, rank-deficient, diverging.
struct DomainError : Error {
    using Error::Error;
};

// Non-finite arithmetic or an iterative method that failed to converge.
struct NumericError : Error {
    using Error::Error;
};

struct ConvergenceError : NumericError {
    ConvergenceError(const std::string& what, double last)
        : NumericError(what), last_value(last) {}
    double last_value;
};

} // namespace gdcycles
