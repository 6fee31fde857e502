#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace icl {

// Hex-encoded SHA-256 digest.
std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(const std::string& text);

}  // namespace icl
