#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hmmix {

using Seed = std::uint64_t;
using Engine = std::mt19937_64;

/// Independent generator for one consumer of randomness. The stream is a pure
/// function of (master, label, index), so adding consumers or lengthening a
/// run never perturbs draws made by other streams.
Engine substream(Seed master, std::string_view label, std::uint64_t index = 0);

/// Derived 64-bit seed, for handing a child seed to another component.
Seed derive_seed(Seed master, std::string_view label, std::uint64_t index = 0);

}  // namespace hmmix
