#pragma once

#include <stdexcept>
#include <string>

namespace cratersr {

// Error hierarchy mirrored by the CLI exit codes:
//   ArgumentError / FormatError -> 2, NumericError -> 3, IoError -> 4.

class ArgumentError : public std::runtime_error {
public:
    explicit ArgumentError(const std::string& msg) : std::runtime_error(msg) {}
};

class FormatError : public ArgumentError {
public:
    explicit FormatError(const std::string& msg) : ArgumentError(msg) {}
};

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace cratersr
