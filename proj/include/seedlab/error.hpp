#pragma once

#include <stdexcept>
#include <string>

namespace seedlab {

// Shapes of two operands are incompatible.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& what) : std::invalid_argument("shape error: " + what) {}
};

// A precondition of an operation was violated by the caller.
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& what) : std::logic_error("contract violation: " + what) {}
};

// Malformed or inconsistent configuration input.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error("config error: " + what) {}
};

}  // namespace seedlab
