#pragma once

#include <cstdint>
#include <random>

namespace ipwsel {

// Random stream keyed by (seed, replication, tag). Streams for different keys
// are seeded independently, so replication r draws the same numbers no matter
// which thread runs it or in what order. Both std::mt19937_64 and
// std::seed_seq are fully specified by the standard; uniforms and normals are
// derived by hand so no implementation-defined distribution is involved.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t replication, std::uint64_t tag = 0);

    // Uniform on the open interval (0,1).
    double uniform() noexcept;
    // Standard normal by inverse CDF.
    double normal();
    bool bernoulli(double p) noexcept { return uniform() < p; }

private:
    std::mt19937_64 engine_;
};

}  // namespace ipwsel
