#pragma once

#include <stdexcept>
#include <string>

namespace glissando {

// Bad run configuration (CLI flags, config files, incompatible model settings).
// The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Broken or missing dataset content (unreadable files, invariant violations).
// The CLI maps this to exit code 3.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace glissando
