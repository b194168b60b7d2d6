#include "doge/util.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

#include <nlohmann/json.hpp>

#include "doge/errors.hpp"

namespace doge {

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t hash_tokens(std::span<const int> tokens) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (int t : tokens) {
        const auto u = static_cast<uint32_t>(t);
        unsigned char bytes[4] = {
            static_cast<unsigned char>(u & 0xff),
            static_cast<unsigned char>((u >> 8) & 0xff),
            static_cast<unsigned char>((u >> 16) & 0xff),
            static_cast<unsigned char>((u >> 24) & 0xff),
        };
        h = fnv1a64(bytes, 4, h);
    }
    return h;
}

std::string double_to_hex(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", x);
    return std::string(buf);
}

double hex_to_double(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || (end && *end != '\0')) {
        throw IoError("malformed hex-float value: " + s);
    }
    return v;
}

std::string double_to_string(double x) {
    // nlohmann's serializer emits the shortest representation that
    // round-trips the exact value; reuse it for deterministic CSV output.
    return nlohmann::json(x).dump();
}

uint64_t digest_doubles(std::span<const double> values) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : values) {
        uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        h = fnv1a64(&bits, sizeof(bits), h);
    }
    return h;
}

} // namespace doge
