#pragma once

#include <stdexcept>
#include <string>

namespace swflow {

/// Raised when an operation is asked of a measure parameterization that
/// cannot support it (e.g. entropy of a particle cloud).
class capability_error : public std::logic_error {
public:
    explicit capability_error(const std::string& what) : std::logic_error(what) {}
};

/// Raised when inputs are structurally valid but numerically out of domain
/// (non-PSD covariance, coincident particles under a singular kernel, ...).
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace swflow
