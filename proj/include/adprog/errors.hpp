#pragma once

#include <stdexcept>
#include <string>

namespace adprog {

// Malformed configuration (bad field, missing file). CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Input data violates a documented contract (bad CSV, invariant breach,
// precondition failure). CLI exit code 3.
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical fault at runtime (NaN loss, shape mismatch inside the tensor
// core, untrained model where a trained one is required). CLI exit code 4.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace adprog
