#pragma once

#include <stdexcept>
#include <string>

namespace railkf {

/// Bad or inconsistent configuration (parameters, grids, file contents).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical failure: singular matrices, NaNs, non-PSD covariances.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Time integration blew up. Carries the name of the offending state.
struct InstabilityError : NumericError {
    InstabilityError(const std::string& msg, std::string state_name)
        : NumericError(msg), state(std::move(state_name)) {}
    std::string state;
};

/// File system or parse failure on external data.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace railkf
