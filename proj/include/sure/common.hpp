#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <boost/dynamic_bitset.hpp>

namespace sure {

using ClassId = std::uint32_t;
using FeatureIndex = std::size_t;
using BinIndex = std::uint32_t;

/// Instance-id set over the rows of a dataset.
using Bitset = boost::dynamic_bitset<std::uint64_t>;

/// Raised for malformed input files, bad parameters and contract violations
/// that a caller can report back to a user.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Pipeline stage exceeded its wall-clock budget.
class TimeoutError : public Error {
public:
    using Error::Error;
};

/// FNV-1a, used for dataset fingerprints. Stable across platforms.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

/// splitmix64 finalizer; derives independent RNG seeds from (seed, index) pairs.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Optional wall-clock budget checked between pipeline stages.
class Deadline {
public:
    using Clock = std::chrono::steady_clock;

    Deadline() = default;
    explicit Deadline(std::chrono::duration<double> budget)
        : at_(Clock::now() + std::chrono::duration_cast<Clock::duration>(budget)), armed_(true) {}

    bool expired() const { return armed_ && Clock::now() >= at_; }
    void check(const char* stage) const {
        if (expired()) {
            throw TimeoutError(std::string("time budget exceeded during ") + stage);
        }
    }

private:
    Clock::time_point at_{};
    bool armed_ = false;
};

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

}  // namespace sure
