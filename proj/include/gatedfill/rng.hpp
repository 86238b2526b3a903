#pragma once

#include <cstdint>
#include <random>

namespace gatedfill {

/// Seedable stream built on std::mt19937_64, whose output sequence is fixed
/// by the C++ standard. The real/integer/normal conversions are done here
/// rather than through <random> distributions, which are
/// implementation-defined, so every draw is identical on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    /// Independent stream for (seed, index), e.g. one per sample or batch.
    static Rng derive(uint64_t seed, uint64_t index);

    uint64_t next_u64() {
        ++draws_;
        return engine_();
    }
    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer on {lo, ..., hi} (inclusive).
    int64_t uniform_int(int64_t lo, int64_t hi);
    bool coin() { return (next_u64() >> 63) != 0; }
    /// Standard normal via Box-Muller; consumes two draws per call.
    double normal();

    /// Number of 64-bit words consumed so far.
    uint64_t draws() const { return draws_; }

private:
    std::mt19937_64 engine_;
    uint64_t draws_ = 0;
};

uint64_t splitmix64(uint64_t x);

}  // namespace gatedfill
