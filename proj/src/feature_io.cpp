#include "softpatch/feature_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "binary_io.hpp"
#include "softpatch/error.hpp"
#include "softpatch/parallel.hpp"

namespace softpatch {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kFeatureMagic{"SPF1\0", 5};
constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::size_t kFeatureHeaderBytes = kFeatureMagic.size() + 4 + 12;

std::uint32_t parse_u32(std::string_view text, std::string_view what) {
  std::uint32_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw InputError("manifest: invalid " + std::string(what) + " '" + std::string(text) + "'");
  return v;
}

fs::path resolve(const fs::path& base_dir, const std::string& text) {
  fs::path p(text);
  if (p.is_relative()) p = base_dir / p;
  return fs::absolute(p).lexically_normal();
}

std::string relativize(const fs::path& p, const fs::path& base_dir) {
  const fs::path base = fs::absolute(base_dir).lexically_normal();
  const fs::path rel = fs::absolute(p).lexically_normal().lexically_relative(base);
  if (rel.empty()) return p.string();
  return rel.generic_string();
}

}  // namespace

std::string to_string(const FeatureShape& s) {
  return "(" + std::to_string(s.channels) + ", " + std::to_string(s.height) + ", " + std::to_string(s.width) + ")";
}

void FeatureMap::validate() const {
  if (shape.channels == 0 || shape.height == 0 || shape.width == 0)
    throw InputError("feature map '" + image_id + "': zero dimension");
  if (data.size() != shape.volume())
    throw InputError("feature map '" + image_id + "': data length does not match shape " + to_string(shape));
  for (float v : data)
    if (!std::isfinite(v)) throw InputError("feature map '" + image_id + "': non-finite value");
}

std::vector<std::uint8_t> encode_feature_map(const FeatureMap& map) {
  map.validate();
  detail::ByteWriter w;
  w.reserve(kFeatureHeaderBytes + 4 * map.data.size());
  w.raw(kFeatureMagic);
  w.u32(kFeatureVersion);
  w.u32(map.shape.channels);
  w.u32(map.shape.height);
  w.u32(map.shape.width);
  for (float v : map.data) w.f32(v);
  return w.bytes();
}

FeatureMap decode_feature_map(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (!r.expect_magic(kFeatureMagic)) throw FormatError("bad magic");
  const std::uint32_t version = r.u32();
  if (version != kFeatureVersion) throw FormatError("unsupported SPF1 version " + std::to_string(version));
  FeatureMap map;
  map.shape.channels = r.u32();
  map.shape.height = r.u32();
  map.shape.width = r.u32();
  const std::uint64_t count = detail::checked_volume(map.shape.channels, map.shape.height, map.shape.width,
                                                     std::numeric_limits<std::uint64_t>::max() / 4);
  if (r.remaining() < count * 4) throw FormatError("truncated payload");
  if (r.remaining() > count * 4) throw FormatError("trailing data after payload");
  map.data.resize(count);
  for (auto& v : map.data) v = r.f32();
  for (float v : map.data)
    if (!std::isfinite(v)) throw FormatError("non-finite value");
  return map;
}

void write_feature_file(const FeatureMap& map, const fs::path& path) {
  const auto bytes = encode_feature_map(map);
  detail::write_file_bytes(path, bytes);
}

FeatureMap read_feature_file(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("missing file: " + path.string());
  const auto bytes = detail::read_file_bytes(path);
  FeatureMap map = decode_feature_map(bytes);
  map.image_id = path.stem().string();
  return map;
}

std::string_view to_string(Label label) { return label == Label::normal ? "normal" : "anomalous"; }

Label parse_label(std::string_view text) {
  if (text == "normal") return Label::normal;
  if (text == "anomalous") return Label::anomalous;
  throw InputError("manifest: invalid label '" + std::string(text) + "'");
}

DatasetManifest parse_manifest(std::string_view text, const fs::path& base_dir) {
  DatasetManifest manifest;
  std::istringstream lines{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::string token;
    ManifestEntry entry;
    bool any = false, has_path = false, has_id = false, has_label = false, has_h = false, has_w = false;
    while (tokens >> token) {
      any = true;
      const auto eq = token.find('=');
      if (eq == std::string::npos || eq == 0)
        throw InputError("manifest line " + std::to_string(line_no) + ": expected key=value, got '" + token + "'");
      const std::string key = token.substr(0, eq);
      const std::string value = token.substr(eq + 1);
      if (key == "feature_path") {
        entry.feature_path = resolve(base_dir, value);
        has_path = true;
      } else if (key == "image_id") {
        entry.image_id = value;
        has_id = true;
      } else if (key == "label") {
        entry.label = parse_label(value);
        has_label = true;
      } else if (key == "mask_path") {
        if (!value.empty()) entry.mask_path = resolve(base_dir, value);
      } else if (key == "H") {
        entry.image_height = parse_u32(value, "H");
        has_h = true;
      } else if (key == "W") {
        entry.image_width = parse_u32(value, "W");
        has_w = true;
      } else if (key == "category") {
        entry.category = value;
      } else if (key == "injected") {
        entry.injected = value == "1" || value == "true";
      } else {
        throw InputError("manifest line " + std::to_string(line_no) + ": unknown key '" + key + "'");
      }
    }
    if (!any) continue;
    if (!(has_path && has_id && has_label && has_h && has_w))
      throw InputError("manifest line " + std::to_string(line_no) +
                       ": feature_path, image_id, label, H and W are required");
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

std::string format_manifest(const DatasetManifest& manifest, const fs::path& base_dir) {
  std::ostringstream out;
  for (const auto& e : manifest.entries) {
    out << "feature_path=" << relativize(e.feature_path, base_dir) << " image_id=" << e.image_id
        << " label=" << to_string(e.label);
    if (e.mask_path) out << " mask_path=" << relativize(*e.mask_path, base_dir);
    out << " H=" << e.image_height << " W=" << e.image_width;
    if (e.category != "default") out << " category=" << e.category;
    if (e.injected) out << " injected=1";
    out << '\n';
  }
  return out.str();
}

DatasetManifest read_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("missing manifest: " + path.string());
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str(), path.parent_path());
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path.string());
  out << format_manifest(manifest, path.parent_path());
  if (!out) throw InputError("write failed: " + path.string());
}

void validate_manifest(const DatasetManifest& manifest) {
  std::unordered_set<std::string> seen;
  for (const auto& e : manifest.entries) {
    if (e.image_id.empty()) throw InputError("manifest: empty image_id");
    if (!seen.insert(e.image_id).second) throw InputError("manifest: duplicate image_id '" + e.image_id + "'");
    if (e.image_height == 0 || e.image_width == 0)
      throw InputError("manifest: image '" + e.image_id + "' has zero H or W");
  }
}

FeatureDataset make_dataset(std::vector<FeatureMap> maps) {
  if (maps.empty()) throw InputError("empty dataset");
  FeatureDataset ds;
  ds.shape = maps.front().shape;
  for (const auto& m : maps) {
    m.validate();
    if (m.shape != ds.shape)
      throw InputError("shape mismatch: '" + m.image_id + "' has " + to_string(m.shape) + ", expected " +
                       to_string(ds.shape));
  }
  ds.maps = std::move(maps);
  return ds;
}

FeatureDataset load_dataset(const DatasetManifest& manifest) {
  if (manifest.entries.empty()) throw InputError("empty dataset");
  validate_manifest(manifest);
  std::vector<FeatureMap> maps(manifest.entries.size());
  parallel_for(0, maps.size(), [&](std::size_t i) {
    const auto& entry = manifest.entries[i];
    maps[i] = read_feature_file(entry.feature_path);
    maps[i].image_id = entry.image_id;
  });
  return make_dataset(std::move(maps));
}

namespace {

// Reads one header token of a binary PGM, skipping whitespace and comments.
std::string pgm_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string token;
  while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') token.push_back(static_cast<char>(bytes[pos++]));
  if (token.empty()) throw FormatError("truncated PGM header");
  return token;
}

}  // namespace

GrayImage read_pgm(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("missing file: " + path.string());
  const auto bytes = detail::read_file_bytes(path);
  std::size_t pos = 0;
  if (pgm_token(bytes, pos) != "P5") throw FormatError("bad magic: not a binary PGM: " + path.string());
  GrayImage img;
  img.width = parse_u32(pgm_token(bytes, pos), "PGM width");
  img.height = parse_u32(pgm_token(bytes, pos), "PGM height");
  const std::uint32_t maxval = parse_u32(pgm_token(bytes, pos), "PGM maxval");
  if (maxval == 0 || maxval > 255) throw FormatError("only 8-bit PGM masks are supported: " + path.string());
  ++pos;  // single whitespace after maxval
  const std::size_t count = std::size_t{img.width} * img.height;
  if (pos + count > bytes.size()) throw FormatError("truncated payload: " + path.string());
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + count));
  return img;
}

void write_pgm(const GrayImage& image, const fs::path& path) {
  if (image.pixels.size() != std::size_t{image.width} * image.height) throw InputError("PGM size mismatch");
  detail::ByteWriter w;
  w.raw("P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n");
  w.raw(image.pixels);
  detail::write_file_bytes(path, w.bytes());
}

void write_pgm16(std::span<const double> values, std::uint32_t width, std::uint32_t height, double scale,
                 const fs::path& path) {
  if (values.size() != std::size_t{width} * height) throw InputError("PGM size mismatch");
  std::ostringstream header;
  header.precision(17);
  header << "P5\n# scale=" << scale << "\n" << width << " " << height << "\n65535\n";
  detail::ByteWriter w;
  w.raw(header.str());
  for (double v : values) {
    const double t = scale > 0 ? std::clamp(v / scale, 0.0, 1.0) : 0.0;
    const auto q = static_cast<std::uint16_t>(std::lround(t * 65535.0));
    // PGM stores 16-bit samples big-endian.
    const std::uint8_t be[2] = {static_cast<std::uint8_t>(q >> 8), static_cast<std::uint8_t>(q & 0xff)};
    w.raw(be);
  }
  detail::write_file_bytes(path, w.bytes());
}

GrayImage load_mask(const ManifestEntry& entry) {
  if (!entry.mask_path) {
    GrayImage blank{entry.image_width, entry.image_height, {}};
    blank.pixels.assign(std::size_t{entry.image_width} * entry.image_height, 0);
    return blank;
  }
  GrayImage mask = read_pgm(*entry.mask_path);
  if (mask.width != entry.image_width || mask.height != entry.image_height)
    throw InputError("mask of '" + entry.image_id + "' is " + std::to_string(mask.width) + "x" +
                     std::to_string(mask.height) + ", manifest says " + std::to_string(entry.image_width) + "x" +
                     std::to_string(entry.image_height));
  if (entry.label == Label::normal) {
    for (auto px : mask.pixels)
      if (px != 0) throw InputError("normal image '" + entry.image_id + "' has a nonzero mask");
  }
  return mask;
}

}  // namespace softpatch
