#pragma once

#include <stdexcept>
#include <string>

namespace ecdm {

// Error classes map onto the CLI's structured exit codes:
// config errors -> 2, data errors -> 3, numeric failures -> 4.
// std::invalid_argument from argument validation is treated as a config error.

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace ecdm
