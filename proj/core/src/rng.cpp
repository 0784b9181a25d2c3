#include "tsearch/rng.hpp"

#include <cmath>

namespace tsearch {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t master_seed, std::string_view module,
                          std::uint64_t trial) {
  std::uint64_t h = splitmix64(master_seed);
  h = splitmix64(h ^ fnv1a(module));
  h = splitmix64(h ^ trial);
  return h;
}

double standard_normal(Rng& rng) {
  constexpr double kTwoPi = 6.283185307179586476925;
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

}  // namespace tsearch
