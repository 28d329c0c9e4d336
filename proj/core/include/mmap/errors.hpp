#pragma once

#include <stdexcept>
#include <string>

namespace mmap {

// Base class for all recoverable domain errors. The CLI maps these to
// exit code 1; anything else escaping main is a bug.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset directory does not match the expected layout (missing file/dir).
class DatasetLayoutError : public Error {
public:
    using Error::Error;
};

// Spot ids disagree between the counts table and the coordinate table.
class AlignmentError : public Error {
public:
    using Error::Error;
};

// A value in an input file could not be parsed.
class ParseError : public Error {
public:
    using Error::Error;
};

// Invalid configuration value or out-of-range argument.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Tensor/vector dimensions do not match what the operation requires.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Input value outside the mathematical domain of the operation.
class DomainError : public Error {
public:
    using Error::Error;
};

// A patch window would fall outside the slide image.
class BoundaryError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace mmap
