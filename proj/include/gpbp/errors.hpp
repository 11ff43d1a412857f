#pragma once

#include <stdexcept>
#include <string>

namespace gpbp {

/// Invalid parameters or configuration values.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed input files.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// A precision matrix that should be positive definite was not.
class SingularError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite or runaway iterates.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, int sweep) : std::runtime_error(what), sweep_(sweep) {}
    int sweep() const { return sweep_; }

private:
    int sweep_;
};

}  // namespace gpbp
