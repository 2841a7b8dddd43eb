#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include "types.hpp"

namespace sepfx {

// mt19937_64 with hand-rolled variate transforms so that draws are identical
// across standard libraries.
class Rng {
public:
    explicit Rng(std::initializer_list<std::uint32_t> keys) {
        std::seed_seq seq(keys);
        eng_.seed(seq);
    }
    Rng(std::uint32_t seed, std::uint32_t stream) : Rng({seed, stream}) {}
    Rng(std::uint32_t seed, std::uint32_t stream, std::uint32_t sub)
        : Rng({seed, stream, sub}) {}

    // uniform on [0, 1) with 53-bit resolution
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double exponential(double rate) {
        if (!(rate > 0.0)) throw error("exponential rate must be positive");
        return -std::log1p(-uniform()) / rate;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // uniform index in [0, n)
    std::size_t below(std::size_t n) {
        std::size_t i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace sepfx
