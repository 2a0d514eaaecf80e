#pragma once

#include <charconv>
#include <string>

namespace obidet {

/// Shortest decimal representation that round-trips the double; byte-stable
/// across runs and locales.
inline std::string fmt_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace obidet
