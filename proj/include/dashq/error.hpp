#pragma once

#include <stdexcept>
#include <string>

namespace dashq {

// Bad inputs, malformed files, contract violations. CLI maps this to exit code 2.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failures (singular Hessian, zero denominators). CLI maps this to exit code 3.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace dashq
