#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace doge {

// Deterministic random stream. Wraps std::mt19937_64 (fully specified by the
// standard, so sequences are identical across platforms) and avoids
// std::*_distribution, whose outputs are implementation-defined.
class RngStream {
public:
    explicit RngStream(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n), bias-free via rejection.
    uint64_t next_below(uint64_t n);

    // Inverse-CDF draw from a probability vector.
    int categorical(std::span<const double> probs);

    // Standard normal via Box-Muller (both draws consumed every call).
    double next_gaussian();

private:
    std::mt19937_64 engine_;
};

// Stateless substream derivation: stream(path) depends only on (root, path),
// so concurrent consumers can be given independent streams and a run replays
// identically regardless of evaluation order.
class RngFactory {
public:
    explicit RngFactory(uint64_t root) : root_(root) {}

    uint64_t root() const { return root_; }

    RngStream stream(std::initializer_list<uint64_t> path) const {
        uint64_t s = mix(root_ ^ 0x9e3779b97f4a7c15ULL);
        for (uint64_t p : path) {
            s = mix(s ^ mix(p + 0x9e3779b97f4a7c15ULL));
        }
        return RngStream(s);
    }

private:
    static uint64_t mix(uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    uint64_t root_;
};

// Stream-path tags, so substream keys are readable at call sites.
namespace rng_tag {
inline constexpr uint64_t init_policy = 1;
inline constexpr uint64_t task_select = 2;
inline constexpr uint64_t rollout = 3;
inline constexpr uint64_t solver = 4;
inline constexpr uint64_t eval = 5;
inline constexpr uint64_t curriculum = 6;
inline constexpr uint64_t measure = 7;
} // namespace rng_tag

} // namespace doge
