#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "softpatch/discriminators.hpp"
#include "softpatch/feature_io.hpp"
#include "softpatch/fingerprint.hpp"

namespace softpatch {

enum class Sampler { greedy, random };

std::string_view to_string(Sampler sampler);
Sampler parse_sampler(std::string_view text);

struct DenoiseConfig {
  double tau = 0.15;
  Sampler sampler = Sampler::greedy;
  double sampling_ratio = 0.10;
  std::optional<std::size_t> projection_dim = 128;
  std::uint64_t seed = 0;
  bool soft_weights = true;  // false stores weight 1 for every entry (ablation)
};

/// Where a patch came from: image index within the training dataset and grid cell.
struct PatchRef {
  std::uint32_t image = 0;
  std::uint32_t h = 0;
  std::uint32_t w = 0;

  bool operator==(const PatchRef&) const = default;
};

/// Row-major block of float vectors with per-row weight and provenance.
struct PatchPool {
  std::size_t dim = 0;
  std::vector<float> vectors;
  std::vector<double> weights;
  std::vector<PatchRef> provenance;

  std::size_t size() const { return weights.size(); }
  std::span<const float> row(std::size_t i) const { return {vectors.data() + i * dim, dim}; }
};

struct MemoryBank {
  std::size_t dim = 0;
  std::vector<float> entries;
  std::vector<double> soft_weights;
  std::vector<PatchRef> provenance;
  Digest config_fingerprint{};

  std::size_t size() const { return soft_weights.size(); }
  std::span<const float> entry(std::size_t i) const { return {entries.data() + i * dim, dim}; }

  bool operator==(const MemoryBank&) const = default;
};

/// Canonical "key=value" text of everything that shapes a bank; hashed into its fingerprint.
std::string canonical_config(const DiscriminatorConfig& discriminator, const DenoiseConfig& denoise);
Digest config_fingerprint(const DiscriminatorConfig& discriminator, const DenoiseConfig& denoise);

/// Drops every patch scoring strictly above the global (1 - tau) quantile of all scores.
/// Retains N*h*w - floor(tau*N*h*w) patches, or more when scores tie at the cut.
PatchPool threshold_filter(const FeatureDataset& dataset, const ScoreTensor& scores, double tau);

/// LOF weights pass through. Nearest/Gaussian weights have zeros lifted to the smallest positive
/// weight (1 if none) and are then divided by their mean. Method::none sets every weight to 1.
PatchPool normalize_weights(PatchPool pool, Method method);

/// Gaussian random projection (entries N(0,1)/sqrt(dim)), deterministic in `seed`.
Matrix project(const Matrix& vectors, std::size_t dim, std::uint64_t seed);

/// Number of entries kept for a pool of m rows: ceil(ratio * m).
std::size_t coreset_size(std::size_t m, double ratio);

/// Farthest-point (k-center) greedy selection starting from row 0, ties to the lowest index.
/// Returns indices in selection order.
std::vector<std::size_t> greedy_select(const PatchPool& pool, double ratio, std::optional<std::size_t> projection_dim,
                                       std::uint64_t seed);

/// Uniform sample without replacement; ratio 1 yields a permutation.
std::vector<std::size_t> random_select(const PatchPool& pool, double ratio, std::uint64_t seed);

struct BuildStats {
  std::size_t total_patches = 0;
  std::size_t retained_patches = 0;
  std::size_t bank_size = 0;
  double weight_min = 0.0;
  double weight_max = 0.0;
  double weight_mean = 0.0;
};

/// threshold_filter -> normalize_weights -> select -> MemoryBank. Method::none disables both
/// the threshold (tau treated as 0) and the weighting.
MemoryBank build_bank(const FeatureDataset& dataset, const ScoreTensor& scores, const DenoiseConfig& config,
                      const DiscriminatorConfig& discriminator, BuildStats* stats = nullptr);

/// SPB1: "SPB1\0", u32 version, u32 K, u32 c, K*c f32 entries, K f64 weights, K*3 u32 provenance,
/// 32-byte fingerprint, all little-endian.
std::vector<std::uint8_t> encode_bank(const MemoryBank& bank);
MemoryBank decode_bank(std::span<const std::uint8_t> bytes);
void write_bank(const MemoryBank& bank, const std::filesystem::path& path);
MemoryBank read_bank(const std::filesystem::path& path);

}  // namespace softpatch
