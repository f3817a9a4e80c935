#pragma once

#include <stdexcept>
#include <string>

namespace flowlab {

/// Malformed or inconsistent input (dimension mismatch, invalid weights, bad config).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Time argument outside the domain on which an operation is defined.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Time argument too close to t = 1 where 1/(1-t) blows up.
class SingularityError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Mixture configuration outside what an analysis supports (e.g. asymmetric target).
class UnsupportedConfiguration : public InputError {
public:
    using InputError::InputError;
};

/// Training produced a non-finite loss.
class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& what, int epoch)
        : std::runtime_error(what), epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

/// A particle state became non-finite during ODE integration.
class IntegrationError : public std::runtime_error {
public:
    IntegrationError(const std::string& what, std::size_t particle, int step)
        : std::runtime_error(what), particle_(particle), step_(step) {}
    std::size_t particle() const { return particle_; }
    int step() const { return step_; }

private:
    std::size_t particle_;
    int step_;
};

}  // namespace flowlab
