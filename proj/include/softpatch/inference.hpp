#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "softpatch/coreset.hpp"
#include "softpatch/feature_io.hpp"

namespace softpatch {

struct NearestHit {
  std::size_t index = 0;
  double distance = 0.0;
};

/// Simple dense row-major grid of doubles.
struct ScoreGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double& at(std::size_t h, std::size_t w) { return values[h * width + w]; }
  double at(std::size_t h, std::size_t w) const { return values[h * width + w]; }
};

struct AnomalyResult {
  std::string image_id;
  double image_score = 0.0;
  ScoreGrid patch_scores;
  ScoreGrid pixel_map;  // empty until anomaly_map() runs
};

/// Exact nearest bank entry by L2 distance; ties go to the lowest index.
NearestHit query_nearest(const MemoryBank& bank, std::span<const float> patch);

/// Soft-weighted patch score: weight of the nearest entry times the distance to it.
double score_patch(const MemoryBank& bank, std::span<const float> patch);

/// Patch grid scores and the image score (their maximum).
AnomalyResult score_image(const MemoryBank& bank, const FeatureMap& map);

/// Bilinear upsampling of the patch grid to height x width (half-pixel centers), then a
/// separable Gaussian blur with std `sigma` (radius ceil(4 sigma), edge-replicated).
/// sigma == 0 skips the blur.
AnomalyResult anomaly_map(AnomalyResult result, std::size_t height, std::size_t width, double sigma = 4.0);

ScoreGrid bilinear_upsample(const ScoreGrid& grid, std::size_t height, std::size_t width);
ScoreGrid gaussian_blur(const ScoreGrid& grid, double sigma);

struct ImageScore {
  std::string image_id;
  double score = 0.0;
};

/// Text results: a "fingerprint=<hex>" line followed by one "image_id=<id> score=<value>" line
/// per image, scores written in shortest round-trip form.
struct ResultsFile {
  std::string fingerprint;
  std::vector<ImageScore> scores;
};

void write_results(const ResultsFile& results, const std::filesystem::path& path);
ResultsFile read_results(const std::filesystem::path& path);

}  // namespace softpatch
