#pragma once

#include <cmath>
#include <cstdint>

namespace sptlab {

// Counter-based noise stream: draw j is a pure function of (key, j), so the
// sequence does not depend on evaluation order and distinct streams can be
// consumed from different threads without coordination.
class NoiseStream {
public:
    explicit NoiseStream(std::uint64_t key) : key_(key) {}

    static std::uint64_t finalize(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Stream keys are derived from (master seed, purpose tag, stream index).
    // Market noise, characteristics noise, and auxiliary series use distinct
    // tags so their streams never overlap.
    static std::uint64_t derive_key(std::uint64_t master_seed, std::uint64_t purpose_tag,
                                    std::uint64_t index) {
        std::uint64_t k = finalize(master_seed + kGamma * (purpose_tag + 1));
        return finalize(k + kGamma * (index + 1));
    }

    std::uint64_t bits(std::uint64_t counter) const {
        return finalize(key_ + kGamma * counter);
    }

    // Uniform on the open interval (0, 1).
    double uniform(std::uint64_t counter) const {
        return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal draw per counter (Box-Muller, cosine branch; the
    // paired sine draw is discarded to keep the map stateless).
    double gaussian(std::uint64_t counter) const {
        const double u1 = uniform(2 * counter);
        const double u2 = uniform(2 * counter + 1);
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    std::uint64_t key() const { return key_; }

private:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
    std::uint64_t key_ = 0;
};

// Purpose tags for stream derivation.
inline constexpr std::uint64_t kMarketNoiseTag = 1;
inline constexpr std::uint64_t kCharacteristicsNoiseTag = 2;
inline constexpr std::uint64_t kAuxNoiseTag = 3;

}  // namespace sptlab
