#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace meshfield {

inline constexpr const char* kVersion = "0.1.0";

// Thrown on malformed configs, schemas, or shape contracts.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when a computation produces NaN/Inf or diverges.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown on file read/write failures.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic, platform-independent RNG. std::mt19937 distributions are
// implementation-defined, so all sampling goes through this instead.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        // splitmix64
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        // Box-Muller, uncached
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // unbiased integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t lim = ~std::uint64_t(0) - ~std::uint64_t(0) % n;
        std::uint64_t v = next_u64();
        while (v >= lim) v = next_u64();
        return v % n;
    }

    template <class It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            std::swap(first[i - 1], first[below(i)]);
        }
    }

    // Independent sub-stream, stable under call-order changes elsewhere.
    Rng fork(std::uint64_t tag) const {
        Rng r(state_ ^ (0x632be59bd9b4e019ull * (tag + 1)));
        r.next_u64();
        return r;
    }

private:
    std::uint64_t state_;
};

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace meshfield
