#include "uvu/rng.hpp"

namespace uvu {

std::uint64_t Rng::mix(std::uint64_t z) {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Rng Rng::split(std::uint64_t stream_id) const {
    return Rng(mix(key_ ^ mix(stream_id + 0xD1B54A32D192ED03ULL)), 0);
}

double Rng::normal() { return normal_(*this); }

std::uint64_t Rng::below(std::uint64_t n) {
    if (n <= 1) return 0;
    // Lemire's rejection keeps the draw unbiased.
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t r = (*this)();
        if (r >= threshold) return r % n;
    }
}

}  // namespace uvu
