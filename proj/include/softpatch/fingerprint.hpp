#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace softpatch {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::string_view data);
std::string to_hex(const Digest& digest);
Digest digest_from_hex(std::string_view hex);

/// Shortest round-trippable decimal form, used in canonical config text and result files.
std::string format_real(double value);

}  // namespace softpatch
