#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace uvu {

/// Counter-based, splittable random bit generator.
///
/// Output i of a stream is a pure function of (key, i), so a stream can be
/// forked deterministically with split() and handed to independent workers.
/// Satisfies UniformRandomBitGenerator for use with <random> distributions.
class Rng {
public:
    using result_type = std::uint64_t;

    Rng() : Rng(0) {}
    explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x243F6A8885A308D3ULL)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return mix(key_ + 0x9E3779B97F4A7C15ULL * ++counter_); }

    /// Independent child stream identified by `stream_id`. Does not advance this stream.
    [[nodiscard]] Rng split(std::uint64_t stream_id) const;

    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }

    [[nodiscard]] std::uint64_t key() const noexcept { return key_; }
    [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }

    static std::uint64_t mix(std::uint64_t z);

private:
    Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace uvu
