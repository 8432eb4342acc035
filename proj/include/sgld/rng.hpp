#pragma once

// Deterministic, splittable random streams for reproducible parallel Monte
// Carlo.  A stream is identified by a 64-bit key; derive_stream(master, index,
// tag) mixes the three inputs into a key and expands it into xoshiro256++
// state.  Streams derived with distinct (index, tag) are statistically
// independent for simulation purposes, and the same inputs always rebuild the
// identical stream, so replications can be fanned out across any number of
// workers without changing a single draw.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>

namespace sgld {

namespace detail {

// splitmix64 finalizer: bijective 64-bit mix with good avalanche.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace detail

class RngStream {
  public:
    // Builds the stream for a fully mixed key.  Prefer derive_stream() /
    // fork(), which perform the mixing.
    explicit RngStream(std::uint64_t key) : key_(key) {
        std::uint64_t s = key;
        for (auto& word : state_) word = detail::mix64(s++);
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
    }

    // xoshiro256++ core step.
    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl64(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl64(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; the second value of each pair is cached
    // so consecutive calls consume draws deterministically.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = 1.0 - uniform01();  // (0, 1]; keeps log() finite
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    void fill_normal(std::span<double> out) {
        for (auto& x : out) x = normal();
    }

    // Identity of this stream (the mixed key it was built from).
    std::uint64_t key() const { return key_; }

    // Child stream derived from this stream's identity, not from its consumed
    // state: forking is repeatable regardless of how many draws were taken.
    RngStream fork(std::uint64_t index, std::string_view tag) const;

  private:
    std::uint64_t key_;
    std::uint64_t state_[4];
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Deterministic sub-stream for (master seed, replication index, purpose tag).
inline RngStream derive_stream(std::uint64_t master_seed, std::uint64_t replication_index,
                               std::string_view purpose_tag) {
    std::uint64_t k = detail::mix64(master_seed);
    k = detail::mix64(k ^ replication_index);
    k = detail::mix64(k ^ detail::fnv1a64(purpose_tag));
    return RngStream(k);
}

inline RngStream RngStream::fork(std::uint64_t index, std::string_view tag) const {
    return derive_stream(key_, index, tag);
}

// Uniform point in the centered ball of the given radius: isotropic Gaussian
// direction scaled to radius * U^{1/d}.
inline void sample_uniform_ball(RngStream& stream, double radius, std::span<double> out) {
    double n2 = 0.0;
    for (auto& x : out) {
        x = stream.normal();
        n2 += x * x;
    }
    const double norm = std::sqrt(n2);
    const double r =
        radius * std::pow(stream.uniform01(), 1.0 / static_cast<double>(out.size()));
    const double scale = norm > 0.0 ? r / norm : 0.0;
    for (auto& x : out) x *= scale;
}

}  // namespace sgld
