#ifndef ELITE_LAB_ERRORS_HPP
#define ELITE_LAB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace elite {

// Error taxonomy shared by every module. The CLI maps ConfigError to exit
// code 2 and NumericError to exit code 3.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Sequence longer than a configured maximum.
struct LengthError : ContractError {
    using ContractError::ContractError;
};

}  // namespace elite

#endif  // ELITE_LAB_ERRORS_HPP
