#pragma once

#include <stdexcept>
#include <string>

namespace smc {

/// Raised when importance weights cannot be normalized (all zero after
/// underflow). `k` is the time index of the failing step, or -1 if unknown.
class DegeneracyError : public std::runtime_error {
public:
    DegeneracyError(int k, const std::string& what)
        : std::runtime_error(what), k_(k) {}

    [[nodiscard]] int k() const noexcept { return k_; }

private:
    int k_;
};

/// Invalid experiment configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace smc
