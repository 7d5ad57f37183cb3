#pragma once

#include <cmath>
#include <cstdint>

namespace marketback {

// Counter-based noise source. Every variate is a pure function of
// (seed, stream_id, position), so draw sequences are reproducible across
// runs and across any parallel execution order. Distinct stream ids give
// statistically independent sequences; per-path / per-index work should
// fan out over streams, never share one.
class NoiseSource {
public:
    explicit NoiseSource(std::uint64_t seed, std::uint64_t stream_id = 0)
        : seed_(seed), stream_(stream_id),
          key_(mix64(mix64(seed + 0x9e3779b97f4a7c15ULL) ^
                     mix64(stream_id + 0xbf58476d1ce4e5b9ULL))) {}

    // One standard-normal draw; advances the position by exactly 1.
    double normal() {
        const std::uint64_t c = 2 * pos_++;
        const double u1 = to_unit(word(c));
        const double u2 = to_unit(word(c + 1));
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // One uniform draw in (0,1); advances the position by exactly 1.
    double uniform() {
        const std::uint64_t c = 2 * pos_++;
        return to_unit(word(c));
    }

    // Number of variates consumed so far (normal and uniform both count 1).
    std::uint64_t position() const { return pos_; }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_; }

    // Fresh source on the same seed but a different stream.
    NoiseSource stream(std::uint64_t stream_id) const {
        return NoiseSource(seed_, stream_id);
    }

private:
    static std::uint64_t mix64(std::uint64_t x) {
        x ^= x >> 33;
        x *= 0xff51afd7ed558ccdULL;
        x ^= x >> 33;
        x *= 0xc4ceb9fe1a85ec53ULL;
        x ^= x >> 33;
        return x;
    }

    std::uint64_t word(std::uint64_t counter) const {
        return mix64(mix64(key_ + 0x9e3779b97f4a7c15ULL * (counter + 1)));
    }

    static double to_unit(std::uint64_t w) {
        // 53-bit mantissa, offset by half an ulp so the result is in (0,1).
        return (static_cast<double>(w >> 11) + 0.5) *
               (1.0 / 9007199254740992.0);
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t key_;
    std::uint64_t pos_ = 0;
};

}  // namespace marketback
