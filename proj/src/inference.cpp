#include "softpatch/inference.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "softpatch/error.hpp"
#include "softpatch/fingerprint.hpp"
#include "softpatch/parallel.hpp"

namespace softpatch {

namespace {

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const double d = static_cast<double>(a[c]) - static_cast<double>(b[c]);
    acc += d * d;
  }
  return acc;
}

std::vector<double> gaussian_kernel(double sigma) {
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace

NearestHit query_nearest(const MemoryBank& bank, std::span<const float> patch) {
  if (bank.size() == 0) throw InputError("query_nearest: empty bank");
  if (patch.size() != bank.dim)
    throw InputError("dimension mismatch: bank has " + std::to_string(bank.dim) + " channels, patch has " +
                     std::to_string(patch.size()));
  NearestHit best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const double d = squared_distance(bank.entry(i), patch);
    if (d < best.distance) best = {i, d};
  }
  best.distance = std::sqrt(best.distance);
  return best;
}

double score_patch(const MemoryBank& bank, std::span<const float> patch) {
  const NearestHit hit = query_nearest(bank, patch);
  return bank.soft_weights[hit.index] * hit.distance;
}

AnomalyResult score_image(const MemoryBank& bank, const FeatureMap& map) {
  if (map.shape.channels != bank.dim)
    throw InputError("dimension mismatch: bank has " + std::to_string(bank.dim) + " channels, '" + map.image_id +
                     "' has " + std::to_string(map.shape.channels));
  AnomalyResult result;
  result.image_id = map.image_id;
  result.patch_scores.height = map.shape.height;
  result.patch_scores.width = map.shape.width;
  result.patch_scores.values.assign(map.shape.positions(), 0.0);
  parallel_for(0, map.shape.positions(), [&](std::size_t p) {
    const std::size_t h = p / map.shape.width, w = p % map.shape.width;
    result.patch_scores.at(h, w) = score_patch(bank, map.patch(h, w));
  });
  result.image_score = *std::max_element(result.patch_scores.values.begin(), result.patch_scores.values.end());
  return result;
}

ScoreGrid bilinear_upsample(const ScoreGrid& grid, std::size_t height, std::size_t width) {
  if (grid.height == 0 || grid.width == 0) throw InputError("bilinear_upsample: empty grid");
  ScoreGrid out{height, width, std::vector<double>(height * width)};
  auto source = [](std::size_t dst, std::size_t dst_size, std::size_t src_size, std::size_t& lo, std::size_t& hi,
                   double& frac) {
    const double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(src_size) / static_cast<double>(dst_size) - 0.5;
    const double clamped = std::clamp(s, 0.0, static_cast<double>(src_size - 1));
    lo = static_cast<std::size_t>(std::floor(clamped));
    hi = std::min(lo + 1, src_size - 1);
    frac = clamped - static_cast<double>(lo);
  };
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t y0, y1;
    double fy;
    source(y, height, grid.height, y0, y1, fy);
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t x0, x1;
      double fx;
      source(x, width, grid.width, x0, x1, fx);
      const double top = grid.at(y0, x0) * (1.0 - fx) + grid.at(y0, x1) * fx;
      const double bottom = grid.at(y1, x0) * (1.0 - fx) + grid.at(y1, x1) * fx;
      out.at(y, x) = top * (1.0 - fy) + bottom * fy;
    }
  }
  return out;
}

ScoreGrid gaussian_blur(const ScoreGrid& grid, double sigma) {
  if (sigma < 0.0) throw InputError("sigma must be non-negative");
  if (sigma == 0.0) return grid;
  const std::vector<double> kernel = gaussian_kernel(sigma);
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  const auto height = static_cast<std::ptrdiff_t>(grid.height);
  const auto width = static_cast<std::ptrdiff_t>(grid.width);
  auto clamp_index = [](std::ptrdiff_t i, std::ptrdiff_t n) { return std::clamp<std::ptrdiff_t>(i, 0, n - 1); };

  ScoreGrid horizontal{grid.height, grid.width, std::vector<double>(grid.values.size())};
  for (std::ptrdiff_t y = 0; y < height; ++y)
    for (std::ptrdiff_t x = 0; x < width; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t t = -radius; t <= radius; ++t)
        acc += kernel[static_cast<std::size_t>(t + radius)] *
               grid.values[static_cast<std::size_t>(y * width + clamp_index(x + t, width))];
      horizontal.values[static_cast<std::size_t>(y * width + x)] = acc;
    }

  ScoreGrid out{grid.height, grid.width, std::vector<double>(grid.values.size())};
  for (std::ptrdiff_t y = 0; y < height; ++y)
    for (std::ptrdiff_t x = 0; x < width; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t t = -radius; t <= radius; ++t)
        acc += kernel[static_cast<std::size_t>(t + radius)] *
               horizontal.values[static_cast<std::size_t>(clamp_index(y + t, height) * width + x)];
      out.values[static_cast<std::size_t>(y * width + x)] = acc;
    }
  return out;
}

AnomalyResult anomaly_map(AnomalyResult result, std::size_t height, std::size_t width, double sigma) {
  if (height < result.patch_scores.height || width < result.patch_scores.width)
    throw InputError("anomaly_map: target size smaller than the patch grid");
  result.pixel_map = gaussian_blur(bilinear_upsample(result.patch_scores, height, width), sigma);
  return result;
}

void write_results(const ResultsFile& results, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path.string());
  out << "fingerprint=" << results.fingerprint << '\n';
  for (const auto& s : results.scores) out << "image_id=" << s.image_id << " score=" << format_real(s.score) << '\n';
  if (!out) throw InputError("write failed: " + path.string());
}

ResultsFile read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open results: " + path.string());
  ResultsFile results;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("fingerprint=", 0) == 0) {
      results.fingerprint = line.substr(12);
      continue;
    }
    std::istringstream tokens(line);
    std::string id_token, score_token;
    tokens >> id_token >> score_token;
    if (id_token.rfind("image_id=", 0) != 0 || score_token.rfind("score=", 0) != 0)
      throw FormatError("malformed results line: " + line);
    ImageScore s;
    s.image_id = id_token.substr(9);
    const std::string value = score_token.substr(6);
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), s.score);
    if (ec != std::errc{} || ptr != value.data() + value.size()) throw FormatError("malformed score: " + value);
    results.scores.push_back(std::move(s));
  }
  return results;
}

}  // namespace softpatch
