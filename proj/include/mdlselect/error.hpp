#pragma once

#include <stdexcept>
#include <string>

namespace mdlselect {

/// Bad user input: malformed files, missing columns, out-of-range arguments.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical procedure could not produce a usable answer
/// (singular designs, non-convergence, degenerate domains).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A function was called on data in the wrong state, e.g. unstandardized
/// input where standardized columns are required.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace mdlselect
