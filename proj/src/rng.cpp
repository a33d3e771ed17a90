#include "ipwsel/rng.hpp"

#include "ipwsel/variance.hpp"

namespace ipwsel {

namespace {

std::seed_seq make_seq(std::uint64_t seed, std::uint64_t replication, std::uint64_t tag) {
    return std::seed_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                         static_cast<std::uint32_t>(replication),
                         static_cast<std::uint32_t>(replication >> 32),
                         static_cast<std::uint32_t>(tag), 0x9e3779b9u};
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t replication, std::uint64_t tag) {
    std::seed_seq seq = make_seq(seed, replication, tag);
    engine_.seed(seq);
}

double RandomStream::uniform() noexcept {
    // 53 random bits centred in their cell: never exactly 0 or 1.
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomStream::normal() { return normal_quantile(uniform()); }

}  // namespace ipwsel
