#pragma once

#include <stdexcept>
#include <string>

namespace fastbal {

/// Malformed or inconsistent problem/report file. The message names the
/// offending field.
class schema_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dimension mismatch between paired spectral objects.
class shape_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Not enough data points for the requested estimate.
class insufficient_data_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A probe was fed a noise model it does not apply to.
class model_mismatch_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An oracle quantity (n_opt) does not exist on the grid.
class absent_oracle_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace fastbal
