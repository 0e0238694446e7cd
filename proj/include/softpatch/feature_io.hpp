#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace softpatch {

struct FeatureShape {
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;

  std::size_t positions() const { return std::size_t{height} * width; }
  std::size_t volume() const { return positions() * channels; }
  bool operator==(const FeatureShape&) const = default;
};

std::string to_string(const FeatureShape& s);

/// One image's patch-feature tensor, stored row-major as (h, w, c) so that every patch is a
/// contiguous run of `channels` floats.
struct FeatureMap {
  std::string image_id;
  FeatureShape shape;
  std::vector<float> data;

  std::span<const float> patch(std::size_t h, std::size_t w) const {
    return {data.data() + (h * shape.width + w) * shape.channels, shape.channels};
  }
  std::span<float> patch(std::size_t h, std::size_t w) {
    return {data.data() + (h * shape.width + w) * shape.channels, shape.channels};
  }

  /// Throws InputError if the size does not match the shape or a value is NaN/Inf.
  void validate() const;
};

/// SPF1: "SPF1\0", u32 version (1), u32 c, u32 h, u32 w, then c*h*w f32, all little-endian.
void write_feature_file(const FeatureMap& map, const std::filesystem::path& path);
FeatureMap read_feature_file(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_feature_map(const FeatureMap& map);
FeatureMap decode_feature_map(std::span<const std::uint8_t> bytes);

enum class Label { normal, anomalous };

std::string_view to_string(Label label);
Label parse_label(std::string_view text);

struct ManifestEntry {
  std::filesystem::path feature_path;  // resolved; relative paths in files are manifest-relative
  std::string image_id;
  Label label = Label::normal;
  std::optional<std::filesystem::path> mask_path;
  std::uint32_t image_height = 0;
  std::uint32_t image_width = 0;
  std::string category = "default";
  bool injected = false;  // audit only: anomalous image planted into a training set

  bool operator==(const ManifestEntry&) const = default;
};

/// Line-oriented key=value records, e.g.
///   feature_path=f/000.spf image_id=000 label=normal H=224 W=224 category=bottle
/// Optional keys: mask_path, category, injected. Blank lines and '#' comments are ignored.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  bool operator==(const DatasetManifest&) const = default;
};

DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir);
std::string format_manifest(const DatasetManifest& manifest, const std::filesystem::path& base_dir);
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Unique image ids and positive image dimensions.
void validate_manifest(const DatasetManifest& manifest);

/// Immutable after construction; N maps sharing one shape.
struct FeatureDataset {
  std::vector<FeatureMap> maps;
  FeatureShape shape;

  std::size_t size() const { return maps.size(); }
};

/// Builds a dataset from in-memory maps, enforcing shape consistency and validity.
FeatureDataset make_dataset(std::vector<FeatureMap> maps);

/// Loads every feature file in manifest order; image ids come from the manifest.
FeatureDataset load_dataset(const DatasetManifest& manifest);

/// 8-bit grayscale image; masks treat nonzero as anomalous.
struct GrayImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> pixels;
};

GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const GrayImage& image, const std::filesystem::path& path);

/// Writes a 16-bit P5 PGM, mapping [0, scale] linearly onto [0, 65535]. The scale is recorded
/// in a "# scale=" comment so values can be recovered.
void write_pgm16(std::span<const double> values, std::uint32_t width, std::uint32_t height, double scale,
                 const std::filesystem::path& path);

/// Reads the mask of an entry (all-zero of H x W when the entry has none) and checks that its
/// size matches H x W and that nonzero masks belong to anomalous entries.
GrayImage load_mask(const ManifestEntry& entry);

}  // namespace softpatch
