#pragma once

#include <stdexcept>
#include <string>

namespace grokforge {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Gradient or parameter arrays whose sizes disagree with the recorded state.
class ShapeError : public Error {
public:
    using Error::Error;
};

// NaN or Inf in a loss, an activation or a gradient.
class NumericError : public Error {
public:
    using Error::Error;
};

// Invalid user-facing configuration (bad value, unknown key, malformed file).
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace grokforge
