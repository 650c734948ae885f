#ifndef IVWALD_RNG_HPP
#define IVWALD_RNG_HPP

#include <cmath>
#include <cstdint>

namespace ivwald {

// Counter-based generator built on the SplitMix64 output function
// (Steele, Lea & Flood 2014). Draw i of stream (seed, id) is
//   mix(stream_key(seed, id) + (i+1) * GOLDEN)
// where mix is the SplitMix64 finalizer, so any draw of any stream is
// addressable without generating its predecessors. Streams keyed by
// (seed, replicate) give independent, reproducible parallel substreams.
class CounterRng {
   public:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t at(std::uint64_t key, std::uint64_t i) {
        return mix(key + (i + 1) * kGolden);
    }

    CounterRng(std::uint64_t seed, std::uint64_t stream_id)
        : key_(mix(seed ^ at(0x1905D4EABE5A54FFULL, stream_id))) {}

    explicit CounterRng(std::uint64_t seed) : CounterRng(seed, 0) {}

    std::uint64_t next_u64() { return at(key_, counter_++); }

    // Uniform on [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    bool bernoulli(double p) { return next_double() < p; }

    // Box-Muller; consumes two uniforms per draw (second half discarded so
    // draws stay a pure function of the counter pair).
    double normal() {
        const double u1 = 1.0 - next_double();  // (0, 1]
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // 64-bit multiply-shift; bias is negligible for n << 2^64.
        return static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

   private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace ivwald

#endif
