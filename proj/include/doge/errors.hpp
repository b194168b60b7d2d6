#pragma once

#include <stdexcept>
#include <string>

namespace doge {

// Thrown when an operation is handed arguments that violate its
// preconditions (unknown token ids, empty groups, bad config fields).
class InvalidInputError : public std::runtime_error {
public:
    explicit InvalidInputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a computation produces or receives non-finite values, or a
// runtime numeric invariant (entropy range, KL sign, reward bounds) breaks.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a structural contract is violated, e.g. a frozen snapshot
// whose parameters changed under us.
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// File and wire-protocol failures.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace doge
