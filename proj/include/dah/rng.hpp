#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace dah {

using Rng = std::mt19937_64;

// Named sub-streams derived from one master seed.
enum class Stream : std::uint64_t {
  Simulation = 1,
  FitJitter = 2,
  ResidualUniforms = 3,
  Bootstrap = 4,
  PowerReplicates = 5,
  Calibration = 6,
  Covariates = 7,
};

/// Independent generator keyed by (seed, stream, keys...). Same key, same sequence.
inline Rng make_stream(std::uint64_t seed, Stream stream, std::initializer_list<std::uint64_t> keys = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(4 + 2 * keys.size());
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  push(static_cast<std::uint64_t>(stream));
  for (auto k : keys) push(k);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// Uniform draw on the open interval (0,1).
inline double uniform_open(Rng& rng) {
  // 53-bit mantissa, shifted off zero
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace dah
