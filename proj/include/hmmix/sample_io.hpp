#pragma once

#include <filesystem>
#include <string>

#include "hmmix/dgp.hpp"

namespace hmmix {

/// Reads a CSV sample with header "y,w[,z][,s]" (columns may appear in any
/// order, y and w are required). Regime labels in the file are one-based.
/// Throws ParseError carrying the offending line number.
Sample load_sample(const std::filesystem::path& path);

/// Writes the shortest round-trip decimal rendering of every value.
void save_sample(const Sample& sample, const std::filesystem::path& path);

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace hmmix
