#include "iestrack/rng.hpp"

namespace iestrack {

std::mt19937_64 rng_stream(std::uint64_t seed, std::string_view purpose) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : purpose) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace iestrack
