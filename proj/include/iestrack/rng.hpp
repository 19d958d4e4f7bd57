#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace iestrack {

/// Independent generator for one purpose ("noise", "init", "training", ...), derived from a run seed.
std::mt19937_64 rng_stream(std::uint64_t seed, std::string_view purpose);

}  // namespace iestrack
