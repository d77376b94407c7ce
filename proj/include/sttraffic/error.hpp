#pragma once

#include <stdexcept>
#include <string>

namespace sttraffic {

// Invalid model or function parameter (negative intensity, alpha <= 2, ...).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A series or iteration failed to produce a finite result.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed experiment configuration or CSV input.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ParameterError(what);
}

}  // namespace detail
}  // namespace sttraffic
