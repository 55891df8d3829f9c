// SPDX-License-Identifier: Apache-2.0

#ifndef RGNN_RNG_HPP
#define RGNN_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace rgnn {

// Seeded generator with hand-rolled distributions so streams are identical
// across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform() {
        // 53-bit mantissa in [0,1)
        return static_cast<double>(eng_() >> 11) * (1.0 / 9007199254740992.0);
    }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() {
        // Box-Muller
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
    double exponential(double mean) {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return -mean * std::log(u);
    }
    // uniform integer in [0, n)
    std::uint64_t next(std::uint64_t n) {
        return eng_() % n;  // modulo bias negligible for desk-scale n
    }
    template <typename Seq>
    void shuffle(Seq& s) {
        for (std::size_t i = s.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next(i));
            std::swap(s[i - 1], s[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace rgnn

#endif
