#pragma once

#include <stdexcept>
#include <string>

namespace iestrack {

/// Bad configuration, dangling references, dimension mismatches.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Solver failure, non-finite values, singular factors.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace iestrack
