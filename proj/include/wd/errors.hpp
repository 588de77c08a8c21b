#pragma once

#include <stdexcept>
#include <string>

namespace wd {

// Unreadable, corrupt or unwritable files. The CLI maps this to exit code 2.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Inputs that are well-formed in isolation but mutually inconsistent
// (dimension mismatches, degenerate configurations). CLI exit code 3.
struct InputError : std::runtime_error {
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace wd
