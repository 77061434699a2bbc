#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace gsr {

/// Mixes a list of 64-bit words into one seed via std::seed_seq, so that
/// distinct (seed, stream, index...) tuples give independent generators.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  words.reserve(parts.size() * 2);
  for (std::uint64_t p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (std::uint64_t{out[0]} << 32) | out[1];
}

}  // namespace gsr
