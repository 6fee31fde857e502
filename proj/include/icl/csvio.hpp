#pragma once

#include <filesystem>
#include <string>

namespace icl {

// 17 significant digits: doubles round-trip exactly.
std::string format_g17(double v);

// Writes body prefixed with a provenance comment line and suffixed with a
// sha256 trailer over everything before it:
//   # config_hash=<hex> seed=<n>
//   <body>
//   # sha256=<hex>
void write_hashed_file(const std::filesystem::path& path, const std::string& body,
                       const std::string& config_hash, std::uint64_t seed);

// Re-hashes a file written by write_hashed_file; throws IoError if the
// trailer is missing or does not match.
void verify_hashed_file(const std::filesystem::path& path);

}  // namespace icl
