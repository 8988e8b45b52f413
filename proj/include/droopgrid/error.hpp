#pragma once

#include <stdexcept>
#include <string>

namespace droopgrid {

/// Malformed or inconsistent input: case documents, arguments, schema violations.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical routine could not produce a trustworthy answer.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace droopgrid
