#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace levysde {

// Counter-based stream built on the splitmix64 output function. A stream is
// fully determined by its 64-bit key; the state is just an incrementing
// counter, so streams derived from distinct (root, tag, index) triples are
// independent for all practical purposes and cheap to create in bulk.
namespace detail {

inline constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
    // FNV-1a folded through mix64 for avalanche
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return mix64(h);
}

} // namespace detail

class Stream {
public:
    explicit Stream(std::uint64_t key) : key_(key) {}

    std::uint64_t key() const { return key_; }

    std::uint64_t next_u64() {
        counter_ += detail::kGamma;
        return detail::mix64(key_ ^ counter_);
    }

    // uniform on [0, 1)
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform on (0, 1), strictly interior: log() of it is finite and nonzero
    double next_double_pos() {
        return static_cast<double>((next_u64() >> 12) * 2 + 1) * 0x1.0p-53;
    }

    // standard normal, Marsaglia polar with cached spare
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_double() - 1.0;
            v = 2.0 * next_double() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    // exponential with given rate (mean 1/rate)
    double next_exponential(double rate) {
        return -std::log(next_double_pos()) / rate;
    }

    // uniform sign in {-1, +1}
    double next_sign() {
        return (next_u64() & 1ull) ? 1.0 : -1.0;
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Derive the key for one logical stream. Distinct tags partition the
// experiment into independent stream families; the index picks a path.
inline std::uint64_t derive_key(std::uint64_t root, std::string_view tag,
                                std::uint64_t index) {
    std::uint64_t k = detail::mix64(root + detail::kGamma);
    k = detail::mix64(k ^ detail::hash_tag(tag));
    k = detail::mix64(k + index * detail::kGamma);
    return k;
}

inline Stream derive_stream(std::uint64_t root, std::string_view tag,
                            std::uint64_t index) {
    return Stream(derive_key(root, tag, index));
}

} // namespace levysde
