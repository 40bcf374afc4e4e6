#include "collapsim/rng.hpp"

#include <cmath>
#include <numbers>

namespace collapsim::rng {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix(std::uint64_t z) noexcept {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t child_key(std::uint64_t master_seed, std::uint64_t index, Domain domain) noexcept {
    const std::uint64_t tagged = index ^ (static_cast<std::uint64_t>(domain) << 56);
    return mix(mix(master_seed) ^ mix(tagged));
}

std::uint64_t ChildStream::next_u64() noexcept {
    return mix(key_ + (counter_++) * kGolden);
}

double ChildStream::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double ChildStream::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
}

} // namespace collapsim::rng
