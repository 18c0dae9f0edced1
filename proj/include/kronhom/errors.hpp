#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace kronhom {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration. `key()` names the offending parameter.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& what)
        : Error(key + ": " + what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Operand sizes do not agree, or a size precondition is violated.
class SizeError : public Error {
public:
    using Error::Error;
};

/// An operation declined to run (e.g. dense expansion above the cap).
class RefusalError : public Error {
public:
    using Error::Error;
};

/// Exponential-sum construction could not reach the requested tolerance.
class ApproximationError : public Error {
public:
    ApproximationError(const std::string& what, double best_error)
        : Error(what), best_error_(best_error) {}
    double best_error() const noexcept { return best_error_; }

private:
    double best_error_;
};

/// NaN/Inf encountered inside an iterative method.
class NumericalBreakdown : public Error {
public:
    using Error::Error;
};

/// Statistical fit requested with too few data points.
class InsufficientData : public Error {
public:
    using Error::Error;
};

/// A corrector solve failed to converge; carries realization metadata.
class SolveFailure : public Error {
public:
    SolveFailure(const std::string& what, std::uint64_t seed, int L)
        : Error(what), seed_(seed), L_(L) {}
    std::uint64_t seed() const noexcept { return seed_; }
    int L() const noexcept { return L_; }

private:
    std::uint64_t seed_;
    int L_;
};

}  // namespace kronhom
