#pragma once

#include <stdexcept>
#include <string>

namespace bbm {

/// Process exit codes used by the command-line front end.
enum class ExitCode : int {
    success = 0,
    validation = 1,
    budget = 2,
    starvation = 3,
};

/// Invalid argument, malformed input or insufficient data.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A simulation would exceed its configured particle budget.
class BudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A rejection sampler ran out of attempts.
class StarvationError : public std::runtime_error {
public:
    StarvationError(const std::string& what, double acceptance_estimate)
        : std::runtime_error(what), acceptance_estimate_(acceptance_estimate) {}

    double acceptance_estimate() const noexcept { return acceptance_estimate_; }

private:
    double acceptance_estimate_;
};

}  // namespace bbm
