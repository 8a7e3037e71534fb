#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace bfcdn {

// Splittable counter-based random stream. Every draw is a pure function of
// (seed, purpose, index, counter), so independent streams can be created in
// any order and consumed concurrently without coupling.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0)
        : key_(mix(mix(mix(seed, hash_str(purpose)), index), 0x9e3779b97f4a7c15ULL)) {}

    RngStream derived(std::string_view purpose, std::uint64_t index = 0) const {
        RngStream s(*this);
        s.key_ = mix(mix(key_, hash_str(purpose)), index);
        s.counter_ = 0;
        s.has_spare_ = false;
        return s;
    }

    std::uint64_t next_u64() { return mix(key_, counter_++); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

private:
    static std::uint64_t hash_str(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
        for (const char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    // splitmix64 finalizer over key ^ counter
    static std::uint64_t mix(std::uint64_t key, std::uint64_t x) {
        std::uint64_t z = key + 0x9e3779b97f4a7c15ULL * (x + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace bfcdn
