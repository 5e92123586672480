#pragma once

#include <stdexcept>
#include <string>

namespace uvu {

/// Invalid argument, configuration, or schema. Maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Training produced a non-finite or exploding loss. Maps to CLI exit code 2.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, long step, double loss)
        : std::runtime_error(what), step_(step), loss_(loss) {}

    [[nodiscard]] long step() const noexcept { return step_; }
    [[nodiscard]] double loss() const noexcept { return loss_; }

private:
    long step_;
    double loss_;
};

/// The TD operator matrix is not positive definite and no jitter was requested.
class NonPositiveDefiniteDelta : public std::runtime_error {
public:
    NonPositiveDefiniteDelta(const std::string& what, double min_eigenvalue, double gershgorin_bound)
        : std::runtime_error(what), min_eigenvalue_(min_eigenvalue), gershgorin_bound_(gershgorin_bound) {}

    [[nodiscard]] double min_eigenvalue() const noexcept { return min_eigenvalue_; }
    [[nodiscard]] double gershgorin_bound() const noexcept { return gershgorin_bound_; }

private:
    double min_eigenvalue_;
    double gershgorin_bound_;
};

/// A linear system that must be solved exactly is rank deficient.
class SingularSystemError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace uvu
