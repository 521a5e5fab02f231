#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace qslab {

// Counter-based random stream. Every draw is a pure function of
// (seed, stream key, draw index), so independent streams reproduce
// bit-exactly regardless of evaluation order. Derive one stream per
// entity (question, step, cell) instead of sharing a sequential
// generator across them.
class RngStream {
public:
    explicit RngStream(uint64_t seed) : key_(mix(seed ^ kRootSalt)) {}

    /// Independent child stream derived from a name.
    RngStream child(std::string_view name) const {
        uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char c : name) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        return RngStream(mix(key_ ^ mix(h)), 0);
    }

    /// Independent child stream derived from an index.
    RngStream child(uint64_t index) const {
        return RngStream(mix(key_ + kGolden * (index + 1)), 0);
    }

    uint64_t key() const { return key_; }

    uint64_t next_u64() { return mix(key_ + kGolden * ++counter_); }

    /// Uniform in [0, 1).
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n), n >= 1.
    uint64_t below(uint64_t n) {
        return uint64_t((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Standard normal via Box-Muller; consumes two draws.
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

private:
    static constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;
    static constexpr uint64_t kRootSalt = 0xA24BAED4963EE407ull;

    RngStream(uint64_t key, int) : key_(key) {}

    // splitmix64 finalizer
    static uint64_t mix(uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

    uint64_t key_;
    uint64_t counter_ = 0;
};

}  // namespace qslab
