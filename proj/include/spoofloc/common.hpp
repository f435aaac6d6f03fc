#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace spoofloc {

/// Raised when inputs violate a documented contract (bad annotations,
/// malformed files, out-of-range parameters). Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised for failures of the environment or internal state (unreadable
/// files, non-finite loss). Maps to CLI exit code 2.
class RuntimeError : public std::runtime_error {
public:
    explicit RuntimeError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}

template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& value, const Rest&... rest) {
    os << value;
    format_into(os, rest...);
}
} // namespace detail

template <typename... Args>
std::string cat(const Args&... args) {
    std::ostringstream os;
    detail::format_into(os, args...);
    return os.str();
}

template <typename... Args>
[[noreturn]] void fail_validation(const Args&... args) {
    throw ValidationError(cat(args...));
}

template <typename... Args>
[[noreturn]] void fail_runtime(const Args&... args) {
    throw RuntimeError(cat(args...));
}

/// FNV-1a over a byte string. Used for config hashes in checkpoints and
/// feature-cache keys; stable across platforms.
inline std::uint64_t fnv1a(const std::string& data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace spoofloc
