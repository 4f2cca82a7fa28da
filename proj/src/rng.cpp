#include "bflsim/rng.hpp"

namespace bfl::rng {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
    for (std::uint64_t key : keys) {
        h = splitmix64(h ^ key);
    }
    return h;
}

Engine make_engine(std::uint64_t seed, Stream stream, std::initializer_list<std::uint64_t> keys) {
    const std::uint64_t s = derive_seed(seed, stream, keys);
    std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
    return Engine(seq);
}

}  // namespace bfl::rng
