#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace wd {

// splitmix64 finalizer; also the counter-based generator for index-addressed
// randomness (sequence extensions, per-iteration set picks).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Derives an independent stream seed from (seed, stream).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ull));
}

// Uniform double in [0,1) from a 64-bit word.
inline double u64_to_unit_double(std::uint64_t w) {
    return static_cast<double>(w >> 11) * 0x1.0p-53;
}

// Deterministic RNG. Conversions to double/normal are explicit so streams are
// bit-identical across platforms and reruns for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    double uniform() { return u64_to_unit_double(engine_()); }

    // Box-Muller with the usual spare-value cache.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0,1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Uniform int in [0, n). Modulo bias is irrelevant at our n << 2^64.
    int uniform_int(int n) { return static_cast<int>(engine_() % static_cast<std::uint64_t>(n)); }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace wd
