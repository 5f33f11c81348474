#pragma once

#include <cstdint>
#include <random>

namespace legit {

using Rng = std::mt19937_64;

/// Independent random streams fanned out from one master seed.
enum class Stream : std::uint32_t {
    kObservational = 1,
    kInterventional = 2,
    kModelInit = 3,
    kFit = 4,
    kStrategy = 5,
    kShuffle = 6,
};

/// Splitting rule: std::seed_seq over (master low/high words, stream id, index).
/// The seed_seq algorithm is fixed by the standard, so seeds are portable.
inline std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace legit
