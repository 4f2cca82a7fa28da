#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace bfl::rng {

using Engine = std::mt19937_64;

// Stream tags keep independent consumers of one experiment seed apart.
enum class Stream : std::uint64_t {
    data = 1,
    split = 2,
    partition = 3,
    participants = 4,
    local_training = 5,
    attack = 6,
    aggregation = 7,
    init = 8,
    trigger = 9,
};

std::uint64_t splitmix64(std::uint64_t x);

// Hashes (seed, stream, keys...) into one 64-bit seed. Different key tuples
// give statistically independent engines, so results never depend on the
// order in which workers draw.
std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::initializer_list<std::uint64_t> keys = {});

Engine make_engine(std::uint64_t seed, Stream stream, std::initializer_list<std::uint64_t> keys = {});

}  // namespace bfl::rng
