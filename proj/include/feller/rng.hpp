#pragma once

#include <cstdint>
#include <random>

#include "feller/types.hpp"

namespace feller {

/// The one generator used repo-wide. Streams are keyed by (seed, stream id) so
/// every path of a Monte Carlo run is reproducible independently of the
/// order in which paths are simulated.
using Rng = std::mt19937_64;

inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

inline Vec standard_normal(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> normal;
  Vec out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = normal(rng);
  return out;
}

}  // namespace feller
