#pragma once

// Counter-based random numbers.
//
// Every random quantity in the project is a pure function of a 64-bit key and
// a small integer slot, so simulations are reproducible regardless of the
// order in which replicas, particles or decorations are evaluated. Keys are
// derived hierarchically: (seed, replica) -> root particle -> children, or
// (seed, sample) -> attempt -> decoration, and so on.

#include <cmath>
#include <cstdint>

namespace bbm {

/// SplitMix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives a new key from a parent key and a salt.
constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t salt) noexcept {
    return mix64(parent ^ mix64(salt ^ 0x5851f42d4c957f2dULL));
}

/// Raw 64 random bits for (key, slot).
constexpr std::uint64_t draw_bits(std::uint64_t key, std::uint64_t slot) noexcept {
    return mix64(key ^ mix64(slot + 0x2545f4914f6cdd1dULL));
}

/// Uniform on the open interval (0, 1) with 52-bit resolution.  (53 bits
/// would round the top value to exactly 1.)
constexpr double bits_to_open_unit(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

/// Standard normal quantile (Wichura, AS241 PPND16; relative error ~1e-16).
double normal_quantile(double p) noexcept;

/// A sequential stream over consecutive slots of one key.
class RngStream {
public:
    constexpr explicit RngStream(std::uint64_t key) noexcept : key_(key) {}

    constexpr std::uint64_t key() const noexcept { return key_; }
    constexpr std::uint64_t position() const noexcept { return slot_; }

    std::uint64_t next_bits() noexcept { return draw_bits(key_, slot_++); }
    double uniform() noexcept { return bits_to_open_unit(next_bits()); }
    double normal() noexcept { return normal_quantile(uniform()); }
    double exponential(double rate = 1.0) noexcept { return -std::log(uniform()) / rate; }

    /// Independent child stream; does not advance this stream.
    RngStream fork(std::uint64_t salt) const noexcept { return RngStream(derive_key(key_, salt)); }

private:
    std::uint64_t key_;
    std::uint64_t slot_ = 0;
};

/// Root key for replica `replica` of a run seeded with `seed`.
constexpr std::uint64_t replica_key(std::uint64_t seed, std::uint64_t replica) noexcept {
    return derive_key(mix64(seed), replica);
}

}  // namespace bbm
