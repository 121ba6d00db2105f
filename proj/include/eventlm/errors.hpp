#pragma once

#include <stdexcept>
#include <string>

namespace eventlm {

// Malformed or schema-violating input data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// NaN/inf or otherwise unusable numerics during a computation.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace eventlm
