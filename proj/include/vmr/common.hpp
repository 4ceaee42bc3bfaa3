#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vmr {

using real = double;
using Shape = std::vector<std::size_t>;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
    using Error::Error;
};
struct DomainError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct DataError : Error {
    using Error::Error;
};

namespace detail {

inline void msg_append(std::ostringstream&) {}

template <typename T, typename... Rest>
void msg_append(std::ostringstream& oss, T&& v, Rest&&... rest) {
    oss << std::forward<T>(v);
    msg_append(oss, std::forward<Rest>(rest)...);
}

}  // namespace detail

template <typename... Args>
std::string msg(Args&&... args) {
    std::ostringstream oss;
    detail::msg_append(oss, std::forward<Args>(args)...);
    return oss.str();
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Derives an independent stream seed from a master seed, a tag and an index.
inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag, std::uint64_t k = 0) {
    std::uint64_t h = fnv1a64(tag);
    h ^= seed + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h ^= k + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    // final avalanche (splitmix64)
    h += 0x9e3779b97f4a7c15ULL;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    return h ^ (h >> 31);
}

}  // namespace vmr
