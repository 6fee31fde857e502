#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace icl {

using Rng = std::mt19937_64;

// Mixes a master seed with a purpose label and an index into a fresh stream
// seed. Every randomized component draws from its own labeled stream, so
// enabling or disabling one component never shifts another's randomness.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                          std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline Rng make_rng(std::uint64_t master, std::string_view label,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(master, label, index));
}

}  // namespace icl
