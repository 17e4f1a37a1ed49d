#pragma once

#include <cstdint>

namespace updet {

// splitmix64 stream. Deterministic across platforms (unlike the stdlib
// distributions), single u64 of state so it serializes into checkpoints.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double unif() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double range(double lo, double hi) { return lo + (hi - lo) * unif(); }

    // Uniform integer in [0, n). n must be positive.
    int below(int n) { return static_cast<int>(next() % static_cast<uint64_t>(n)); }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

private:
    uint64_t state_;
};

// Stateless mix for deriving independent seeds from a base seed and an index.
inline uint64_t mix_seed(uint64_t base, uint64_t idx) {
    Rng r(base ^ (0xA0761D6478BD642Full * (idx + 1)));
    return r.next();
}

}  // namespace updet
