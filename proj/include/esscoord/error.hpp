#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace esscoord {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text. `line()` is 1-based; 0 when not tied to a line.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class TopologyError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    using Error::Error;
};

/// A standing modelling assumption does not hold, e.g. slow charging (a1).
class AssumptionError : public Error {
public:
    using Error::Error;
};

class DegenerateEnvelopeError : public Error {
public:
    using Error::Error;
};

class SocViolation : public Error {
public:
    SocViolation(std::size_t unit, double soc, const std::string& what)
        : Error(what), unit_(unit), soc_(soc) {}
    std::size_t unit() const noexcept { return unit_; }
    double soc() const noexcept { return soc_; }

private:
    std::size_t unit_;
    double soc_;
};

class InfeasibleStep : public Error {
public:
    using Error::Error;
};

class InternalError : public Error {
public:
    using Error::Error;
};

}  // namespace esscoord
