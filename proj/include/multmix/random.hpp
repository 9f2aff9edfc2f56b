#ifndef MULTMIX_RANDOM_HPP
#define MULTMIX_RANDOM_HPP

#include <cstdint>
#include <random>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

namespace multmix {

/// 64-bit Mersenne twister. Its output sequence is fixed by the standard, so
/// seeded streams reproduce bit for bit across platforms.
using Rng = std::mt19937_64;

/// Independent stream `id` derived from a master seed. std::seed_seq has a
/// standardized mixing algorithm, which keeps the split portable.
inline Rng make_stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32)};
  return Rng(seq);
}

// Boost's distributions are header-only with a documented algorithm, unlike
// std::normal_distribution whose output differs between standard libraries.
inline double standard_normal(Rng& rng) {
  return boost::random::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return boost::random::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace multmix

#endif  // MULTMIX_RANDOM_HPP
