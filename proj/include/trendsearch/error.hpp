#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trendsearch {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on numeric arguments was violated.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Input file missing or unreadable.
class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed input document or CSV cell. `line` is 1-based, 0 when unknown.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class InvalidPlanError : public Error {
public:
    InvalidPlanError(const std::string& what, std::size_t fold)
        : Error(what), fold_(fold) {}
    std::size_t fold() const { return fold_; }

private:
    std::size_t fold_;
};

/// Tensor shapes do not line up with a layer's expectation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A NaN/Inf was produced or consumed by the neural kernel.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

class TrainingDivergedError : public Error {
public:
    TrainingDivergedError(const std::string& what, std::size_t epoch)
        : Error(what), epoch_(epoch) {}
    std::size_t epoch() const { return epoch_; }

private:
    std::size_t epoch_;
};

/// The configuration describes a network that cannot be built for the
/// given input window (e.g. convolution/pooling shrink the length to zero).
class InfeasibleConfigError : public Error {
public:
    using Error::Error;
};

class SpaceError : public Error {
public:
    using Error::Error;
};

} // namespace trendsearch
