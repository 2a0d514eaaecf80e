#pragma once

#include <stdexcept>
#include <string>

namespace obidet {

/// Caller handed us something invalid (bad box, bad shapes, missing file).
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// A computation produced non-finite or degenerate values.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// An on-disk artifact failed to parse. Carries file name and byte offset.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& file, std::size_t byte_offset, const std::string& what)
        : std::runtime_error(file + " @" + std::to_string(byte_offset) + ": " + what),
          file_(file),
          byte_offset_(byte_offset) {}

    const std::string& file() const { return file_; }
    std::size_t byte_offset() const { return byte_offset_; }

private:
    std::string file_;
    std::size_t byte_offset_;
};

}  // namespace obidet
