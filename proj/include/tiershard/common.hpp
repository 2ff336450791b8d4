#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tiershard {

class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input file or record.
class parse_error : public error {
public:
    using error::error;
};

// An index escaped its declared range.
class bounds_error : public error {
public:
    using error::error;
};

// Invalid configuration or parameter combination.
class config_error : public error {
public:
    using error::error;
};

// No feasible placement exists under the given capacities.
class infeasible_error : public error {
public:
    using error::error;
};

class io_error : public error {
public:
    using error::error;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. mt19937_64 is bit-stable across platforms; the standard
// <random> distributions are not, so sampling is done by hand here. All
// generators derive per-stream seeds through splitmix64 so parallel per-table
// generation produces the same bytes as sequential generation.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next() { return eng_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Unbiased uniform integer in [0, n).
    std::uint64_t bounded(std::uint64_t n) {
        if (n == 0) throw config_error("Rng::bounded: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[bounded(i)]);
        }
    }

private:
    std::mt19937_64 eng_;
};

// Knuth multiplication method, split into chunks for large means so the
// exp(-lambda) factor never underflows. Deterministic given the stream.
inline std::int64_t poisson(Rng& rng, double lambda) {
    if (!(lambda > 0.0)) return 0;
    std::int64_t total = 0;
    double remaining = lambda;
    while (remaining > 0.0) {
        const double chunk = remaining > 400.0 ? 400.0 : remaining;
        remaining -= chunk;
        const double threshold = std::exp(-chunk);
        std::int64_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= rng.uniform();
        } while (p > threshold);
        total += k - 1;
    }
    return total;
}

// Zipf(alpha) over ranks 0..n-1: weight of rank r is (r+1)^-alpha.
// Sampling is an inverse-CDF binary search over the cumulative weights.
class ZipfSampler {
public:
    ZipfSampler(std::int64_t n, double alpha) : cum_(static_cast<std::size_t>(n)) {
        if (n <= 0) throw config_error("ZipfSampler: n must be positive");
        if (!(alpha > 0.0)) throw config_error("ZipfSampler: alpha must be positive");
        double acc = 0.0;
        for (std::int64_t r = 0; r < n; ++r) {
            acc += std::pow(static_cast<double>(r + 1), -alpha);
            cum_[static_cast<std::size_t>(r)] = acc;
        }
    }

    std::int64_t sample(Rng& rng) const {
        const double u = rng.uniform() * cum_.back();
        auto it = std::lower_bound(cum_.begin(), cum_.end(), u);
        if (it == cum_.end()) --it;
        return static_cast<std::int64_t>(it - cum_.begin());
    }

    double mass_of_top(std::int64_t k) const {
        if (k <= 0) return 0.0;
        const std::size_t i = std::min(static_cast<std::size_t>(k), cum_.size()) - 1;
        return cum_[i] / cum_.back();
    }

private:
    std::vector<double> cum_;
};

// ---------------------------------------------------------------------------
// Little-endian binary I/O.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void put_le(std::ostream& os, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    std::uint64_t bits = 0;
    if constexpr (std::is_floating_point_v<T>) {
        if constexpr (sizeof(T) == 4) {
            std::uint32_t b32;
            std::memcpy(&b32, &value, 4);
            bits = b32;
        } else {
            std::memcpy(&bits, &value, 8);
        }
    } else {
        bits = static_cast<std::uint64_t>(value);
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    }
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw parse_error("unexpected end of file");
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    }
    T value;
    if constexpr (std::is_floating_point_v<T>) {
        if constexpr (sizeof(T) == 4) {
            const std::uint32_t b32 = static_cast<std::uint32_t>(bits);
            std::memcpy(&value, &b32, 4);
        } else {
            std::memcpy(&value, &bits, 8);
        }
    } else {
        value = static_cast<T>(bits);
    }
    return value;
}

}  // namespace detail

}  // namespace tiershard
