#pragma once

#include <stdexcept>
#include <string>

namespace gridflex {

// Failure classes map 1:1 onto CLI exit codes:
//   ValidationError -> 1, InputError -> 2, NumericalError -> 3.

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace gridflex
