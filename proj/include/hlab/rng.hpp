#pragma once

#include <cstdint>
#include <string_view>

namespace hlab {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// FNV-1a over a short label, used to turn purpose strings into stream keys.
constexpr std::uint64_t label_hash(std::string_view label) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Combines words into one key. Order sensitive.
constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return mix64(a ^ (mix64(b) + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

/// Counter-based random stream keyed by (seed, purpose, index).
///
/// Draw i of a stream is mix64(key + i * golden), so streams are
/// reproducible on every platform and independent streams never share state.
/// Normal variates use Box-Muller on two uniforms.
class Stream {
public:
    Stream(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0)
        : key_(hash_combine(hash_combine(seed, label_hash(purpose)), index)) {}

    /// Child stream; splitting never advances the parent.
    Stream split(std::string_view purpose, std::uint64_t index = 0) const {
        return Stream(key_, purpose, index);
    }

    std::uint64_t next_u64() {
        return mix64(key_ + (counter_++) * 0x9e3779b97f4a7c15ULL);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    double normal();

    bool bernoulli(double p) { return uniform() < p; }

    std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace hlab
