#pragma once

#include <cstdint>

namespace vartd {

/// Counter-based splittable generator. A stream is keyed by (seed, index),
/// so episode k of a run is reproducible regardless of which thread draws it.
/// The core is the splitmix64 finalizer, applied once to derive the stream
/// state and then iterated to produce outputs.
class SplitRng {
public:
    SplitRng(std::uint64_t seed, std::uint64_t stream_index)
        : state_(mix(mix(seed + 0x9e3779b97f4a7c15ULL) ^ mix(stream_index + 0xbf58476d1ce4e5b9ULL))) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    /// Uniform double in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_;
};

} // namespace vartd
