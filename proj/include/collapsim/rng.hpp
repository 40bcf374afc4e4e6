// Counter-based child streams keyed by (master_seed, trajectory_index).
//
// Bit-exact definition (all arithmetic modulo 2^64):
//
//   mix(z):  z += 0x9E3779B97F4A7C15
//            z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//            z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
//            return z ^ (z >> 31)
//
//   key(seed, index, domain) = mix(mix(seed) ^ mix(index ^ (domain << 56)))
//   u64[k]                   = mix(key + k * 0x9E3779B97F4A7C15),  k = 0, 1, 2, ...
//
// uniform[k] = (u64[k] >> 11) * 2^-53. Standard normals come in Box-Muller pairs
// from consecutive uniforms (u1, u2): r = sqrt(-2 ln(1 - u1)), z0 = r cos(2 pi u2),
// z1 = r sin(2 pi u2), emitted z0 first.
#pragma once

#include <cstdint>

namespace collapsim::rng {

std::uint64_t mix(std::uint64_t z) noexcept;

/// Independent sub-streams of one trajectory.
enum class Domain : std::uint64_t {
    Noise = 0,
    Proposal = 1,
};

std::uint64_t child_key(std::uint64_t master_seed, std::uint64_t index, Domain domain = Domain::Noise) noexcept;

class ChildStream {
public:
    ChildStream(std::uint64_t master_seed, std::uint64_t index, Domain domain = Domain::Noise) noexcept
        : key_(child_key(master_seed, index, domain)) {}

    std::uint64_t next_u64() noexcept;
    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    double normal() noexcept;

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace collapsim::rng
