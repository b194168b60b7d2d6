#include "doge/rng.hpp"

#include <cmath>

#include "doge/errors.hpp"

namespace doge {

uint64_t RngStream::next_below(uint64_t n) {
    if (n == 0) throw InvalidInputError("next_below: n must be positive");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

int RngStream::categorical(std::span<const double> probs) {
    if (probs.empty()) throw InvalidInputError("categorical: empty distribution");
    const double u = next_double();
    double c = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        c += probs[i];
        if (u < c) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size() - 1);
}

double RngStream::next_gaussian() {
    // Box-Muller; u1 shifted away from 0 so log stays finite.
    const double u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(2.0 * M_PI * u2);
}

} // namespace doge
