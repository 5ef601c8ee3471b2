#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace dans {

using Rng = std::mt19937_64;

// Independent stream keyed by (seed, purpose, index...). Streams never depend
// on the order in which other streams are consumed.
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * (keys.size() + 1));
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto k : keys) push(k);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Purpose tags for make_stream.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kUniformNegatives = 3;
inline constexpr std::uint64_t kBandChoice = 4;
inline constexpr std::uint64_t kBandGeneration = 5;
inline constexpr std::uint64_t kDiffusionLoss = 6;
inline constexpr std::uint64_t kKMeans = 7;
inline constexpr std::uint64_t kDam = 8;
inline constexpr std::uint64_t kPretrain = 9;
inline constexpr std::uint64_t kEval = 10;
}  // namespace stream

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

// Fills n standard normal draws; one distribution object so the polar
// method's paired draws are both used.
inline void fill_standard_normal(Rng& rng, double* out, std::size_t n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) out[i] = dist(rng);
}

inline int uniform_index(Rng& rng, int n) {
  std::uniform_int_distribution<int> dist(0, n - 1);
  return dist(rng);
}

inline double uniform_real(Rng& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

}  // namespace dans
