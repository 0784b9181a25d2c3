#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tsearch {

using Rng = std::mt19937_64;

/// Seed of the named sub-stream `module` for one trial. Each module draws
/// from its own stream so extra draws in one place never shift another.
std::uint64_t stream_seed(std::uint64_t master_seed, std::string_view module,
                          std::uint64_t trial = 0);

inline Rng make_stream(std::uint64_t master_seed, std::string_view module,
                       std::uint64_t trial = 0) {
  return Rng(stream_seed(master_seed, module, trial));
}

/// Uniform double in [0, 1) built from the top 53 bits of one draw, so the
/// value sequence does not depend on the standard library's distributions.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Standard normal draw (Box-Muller, one value per call).
double standard_normal(Rng& rng);

}  // namespace tsearch
