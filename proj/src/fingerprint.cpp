#include "softpatch/fingerprint.hpp"

#include <charconv>

#include <openssl/sha.h>

#include "softpatch/error.hpp"

namespace softpatch {

Digest sha256(std::string_view data) {
  Digest out{};
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), out.data());
  return out;
}

std::string to_hex(const Digest& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (auto b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xf]);
  }
  return out;
}

Digest digest_from_hex(std::string_view hex) {
  if (hex.size() != 64) throw FormatError("fingerprint must be 64 hex digits");
  Digest out{};
  for (std::size_t i = 0; i < 32; ++i) {
    unsigned v = 0;
    const auto [ptr, ec] = std::from_chars(hex.data() + 2 * i, hex.data() + 2 * i + 2, v, 16);
    if (ec != std::errc{} || ptr != hex.data() + 2 * i + 2) throw FormatError("fingerprint is not hex");
    out[i] = static_cast<std::uint8_t>(v);
  }
  return out;
}

std::string format_real(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace softpatch
