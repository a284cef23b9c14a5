#pragma once

#include <stdexcept>
#include <string>

namespace fdlab {

// Base for every error raised by the library. Subclasses mark the category so
// callers (tests, the CLI) can map them to exit codes without string matching.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed expression or plan structure (footprint overflow, bad axis, use
// before assignment, ...).
class StructuralError : public Error {
public:
    using Error::Error;
};

class UnsupportedOrderError : public Error {
public:
    using Error::Error;
};

class NotDiscretizedError : public Error {
public:
    using Error::Error;
};

class UnboundReferenceError : public Error {
public:
    using Error::Error;
};

class NumericalBlowupError : public Error {
public:
    using Error::Error;
};

// Positivity violation of density or temperature.
class StateError : public Error {
public:
    using Error::Error;
};

// Bad user-supplied data (non-monotonic samples, invalid parameters, ...).
class InputError : public Error {
public:
    using Error::Error;
};

class ReportError : public Error {
public:
    using Error::Error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace fdlab
