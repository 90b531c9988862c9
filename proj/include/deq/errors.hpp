#pragma once

#include <stdexcept>
#include <string>

namespace deq {

// Base of every error raised by the library. The CLI maps subclasses onto
// distinct exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed arguments: shape mismatch, non-finite entries, out-of-range values.
class InputError : public Error {
public:
    using Error::Error;
};

// An iterative method hit its iteration cap.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double last_residual, int iterations)
        : Error(what), last_residual_(last_residual), iterations_(iterations) {}

    double last_residual() const noexcept { return last_residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    double last_residual_;
    int iterations_;
};

// ||W||_2 >= 1: the layer map is not a contraction, so the equilibrium is not
// guaranteed to exist or be unique.
class WellPosednessError : public Error {
public:
    WellPosednessError(const std::string& what, double spectral_norm)
        : Error(what), spectral_norm_(spectral_norm) {}

    double spectral_norm() const noexcept { return spectral_norm_; }

private:
    double spectral_norm_;
};

// Rank-deficient input to Gram-Schmidt or a construction that requires
// linear independence.
class DegenerateError : public Error {
public:
    using Error::Error;
};

// A dataset violates the data assumptions (normalization, parallel pairs,
// label bound) or a population kernel is not positive definite.
class AssumptionError : public Error {
public:
    using Error::Error;
};

// Binary/CSV file could not be parsed.
class ParseError : public Error {
public:
    using Error::Error;
};


// A runtime check of a convergence guarantee failed while the trainer was
// asked to fail fast (for example the loss rose under a sanctioned step size).
class GuaranteeViolation : public Error {
public:
    GuaranteeViolation(const std::string& what, long step) : Error(what), step_(step) {}

    long step() const noexcept { return step_; }

private:
    long step_;
};

}  // namespace deq
