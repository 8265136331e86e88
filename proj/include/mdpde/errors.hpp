#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mdpde {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the domain of a density, link or parameter space.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed user input: bad design matrix, bad formula, bad CSV.
class InputError : public Error {
public:
    using Error::Error;
};

/// Operation not defined for the given family (e.g. scale score with phi fixed).
class UnsupportedOperation : public Error {
public:
    using Error::Error;
};

/// Singular or degenerate matrices during inference.
class InferenceError : public Error {
public:
    using Error::Error;
};

struct IterationRecord {
    int iteration = 0;
    double objective = 0.0;
    double grad_norm = 0.0;
    double step_norm = 0.0;
    double step_length = 0.0;
};

/// Iterative procedure (series truncation or optimizer) did not reach tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::vector<IterationRecord> trace = {},
                     double achieved = 0.0)
        : Error(what), trace_(std::move(trace)), achieved_(achieved) {}

    const std::vector<IterationRecord>& trace() const noexcept { return trace_; }
    /// Achieved tolerance measure (tail bound or gradient norm) at failure.
    double achieved() const noexcept { return achieved_; }

private:
    std::vector<IterationRecord> trace_;
    double achieved_;
};

}  // namespace mdpde
