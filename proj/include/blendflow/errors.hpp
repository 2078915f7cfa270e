#pragma once

#include <stdexcept>
#include <string>

namespace blendflow {

// Bad input: malformed config files, schema violations, invalid parameters.
// The CLI maps these to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Failure while running: mixing singularities, subsonic-regime violations,
// diverging solves. The CLI maps these to exit code 3.
class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace blendflow
