#include "binary_io.hpp"

#include <fstream>
#include <iterator>
#include <limits>

namespace softpatch::detail {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open file: " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size)))
    throw InputError("read failed: " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed: " + path.string());
}

std::uint64_t checked_volume(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t limit) {
  if (a == 0 || b == 0 || c == 0) throw FormatError("zero dimension");
  if (a > limit / b) throw FormatError("dimension overflow");
  const std::uint64_t ab = a * b;
  if (ab > limit / c) throw FormatError("dimension overflow");
  return ab * c;
}

}  // namespace softpatch::detail
