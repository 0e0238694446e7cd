#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "softpatch/coreset.hpp"
#include "softpatch/discriminators.hpp"
#include "softpatch/feature_io.hpp"

namespace softpatch::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("softpatch_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

using Rows = std::vector<std::vector<double>>;

inline Rows random_rows(std::mt19937_64& rng, std::size_t n, std::size_t c, double spread = 1.0) {
  std::normal_distribution<double> normal(0.0, spread);
  Rows rows(n, std::vector<double>(c));
  for (auto& r : rows)
    for (auto& v : r) v = normal(rng);
  return rows;
}

inline PositionGroup group_from_rows(const Rows& rows) {
  PositionGroup g;
  g.vectors.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.empty() ? 0 : rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      g.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return g;
}

inline FeatureMap random_map(std::mt19937_64& rng, const std::string& id, FeatureShape shape, double spread = 1.0) {
  std::normal_distribution<float> normal(0.0f, static_cast<float>(spread));
  FeatureMap m{id, shape, std::vector<float>(shape.volume())};
  for (auto& v : m.data) v = normal(rng);
  return m;
}

inline FeatureDataset random_dataset(std::mt19937_64& rng, std::size_t n, FeatureShape shape) {
  std::vector<FeatureMap> maps;
  for (std::size_t i = 0; i < n; ++i) maps.push_back(random_map(rng, "img" + std::to_string(i), shape));
  return make_dataset(std::move(maps));
}

/// Pool whose rows are the given points (converted to float), weight 1, provenance (i, 0, 0).
inline PatchPool pool_from_rows(const Rows& rows) {
  PatchPool p;
  p.dim = rows.empty() ? 0 : rows[0].size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (double v : rows[i]) p.vectors.push_back(static_cast<float>(v));
    p.weights.push_back(1.0);
    p.provenance.push_back({static_cast<std::uint32_t>(i), 0, 0});
  }
  return p;
}

inline MemoryBank bank_from_rows(const Rows& rows, std::vector<double> weights = {}) {
  MemoryBank b;
  b.dim = rows.empty() ? 0 : rows[0].size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (double v : rows[i]) b.entries.push_back(static_cast<float>(v));
    b.provenance.push_back({static_cast<std::uint32_t>(i), 0, 0});
  }
  b.soft_weights = weights.empty() ? std::vector<double>(rows.size(), 1.0) : std::move(weights);
  return b;
}

}  // namespace softpatch::testing
