#pragma once

#include <stdexcept>
#include <string>

namespace nnreg {

/// Malformed arguments: dimension or length mismatch, empty grids, bad widths.
class InputError : public std::invalid_argument {
public:
    explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

/// A forward operator could not be evaluated (e.g. the linear solve failed).
class OperatorError : public std::runtime_error {
public:
    explicit OperatorError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
public:
    IoError(const std::string& path, const std::string& what)
        : std::runtime_error(what + ": " + path), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace nnreg
