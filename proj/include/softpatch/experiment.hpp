#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "softpatch/coreset.hpp"
#include "softpatch/discriminators.hpp"
#include "softpatch/evaluation.hpp"
#include "softpatch/feature_io.hpp"

namespace softpatch {

struct NoiseInjectionSpec {
  double noise_ratio = 0.0;
  Setting setting = Setting::no_overlap;
  std::uint64_t seed = 0;
};

struct InjectedManifests {
  DatasetManifest train;
  DatasetManifest test;
};

/// Moves round(n * |train_c|) randomly chosen anomalous test images of every category c into
/// the training manifest (flagged injected=1, label and mask kept for audit). Under no_overlap
/// they are removed from the test manifest; under overlap the test manifest is unchanged.
/// Throws InfeasibleError when a category lacks enough anomalous test images.
InjectedManifests inject_noise(const DatasetManifest& train, const DatasetManifest& test,
                               const NoiseInjectionSpec& spec);

struct SyntheticSpec {
  std::size_t n_images = 60;
  std::uint32_t height = 8;
  std::uint32_t width = 8;
  std::uint32_t channels = 32;
  double outlier_fraction = 0.1;
  double outlier_shift = 5.0;  // in units of cluster_std
  double cluster_std = 1.0;
  double mean_scale = 4.0;  // spread of the per-position cluster centers, in units of cluster_std
  std::uint64_t seed = 7;
};

struct SyntheticData {
  FeatureDataset dataset;
  std::vector<std::uint8_t> image_outlier;  // per image
  std::vector<std::uint8_t> patch_outlier;  // per (image, h, w), row-major like ScoreTensor
};

/// Per position, inliers are N(center_hw, cluster_std^2 I). Outlier images (round(fraction * n),
/// chosen at random) get a contiguous block covering ~20% of the grid shifted by
/// outlier_shift * cluster_std along one random unit direction.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Train/test benchmark on disk built from one synthetic world: `spec.n_images` clean training
/// maps, `test_normal` clean and `test_anomalous` defective test maps with PGM masks.
struct BenchmarkSpec {
  SyntheticSpec synthetic;
  std::size_t test_normal = 20;
  std::size_t test_anomalous = 10;
  std::uint32_t patch_stride = 8;  // pixels per patch cell in masks / image size
  std::string category = "synthetic";
};

struct BenchmarkPaths {
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
};

BenchmarkPaths write_benchmark(const BenchmarkSpec& spec, const std::filesystem::path& dir);

/// Feature maps loaded once and shared across sweep cells, keyed by resolved path.
class FeatureCache {
 public:
  void preload(const DatasetManifest& manifest);
  /// Dataset in manifest order, with manifest image ids.
  FeatureDataset dataset(const DatasetManifest& manifest);

 private:
  std::map<std::filesystem::path, FeatureMap> maps_;
};

struct PipelineConfig {
  DiscriminatorConfig discriminator;
  DenoiseConfig denoise;
  double sigma = 4.0;
  bool pixel_maps = true;
};

/// One bank per category, trained on that category's train entries, scoring its test entries.
EvalReport train_and_evaluate(FeatureCache& cache, const DatasetManifest& train, const DatasetManifest& test,
                              const PipelineConfig& config);

struct SweepConfig {
  std::vector<double> ratios{0.0, 0.05, 0.1, 0.15};
  std::vector<Setting> settings{Setting::no_overlap, Setting::overlap};
  std::vector<DiscriminatorConfig> methods;
  DenoiseConfig denoise;
  double sigma = 4.0;
  bool pixel_maps = true;
  std::size_t repeats = 3;
  std::uint64_t seed = 0;
};

struct SweepRun {
  double noise_ratio = 0.0;
  Setting setting = Setting::no_overlap;
  std::string method;
  std::uint64_t seed = 0;
  EvalReport report;
};

struct SweepResult {
  std::vector<EvalReport> cells;  // averaged over repeats, in (ratio, setting, method) order
  std::vector<SweepRun> runs;
};

/// Cross product of (ratio, setting, method); repeat r uses seed + r for injection and
/// coreset sampling.
SweepResult run_sweep(const DatasetManifest& train, const DatasetManifest& test, const SweepConfig& config);

}  // namespace softpatch
