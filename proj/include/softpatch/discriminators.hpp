#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "softpatch/feature_io.hpp"

namespace softpatch {

/// Noise discriminator. `none` is the unweighted, undenoised baseline.
enum class Method { none, nearest, gaussian, lof };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// The N patch vectors found at one spatial cell across the batch; row n is image n's patch.
struct PositionGroup {
  std::size_t h = 0;
  std::size_t w = 0;
  Matrix vectors;

  std::size_t size() const { return static_cast<std::size_t>(vectors.rows()); }
};

PositionGroup gather_group(const FeatureDataset& dataset, std::size_t h, std::size_t w);

/// Per-patch outlier scores for a whole dataset, indexed (image, h, w).
struct ScoreTensor {
  Method method = Method::none;
  std::size_t images = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> scores;

  double& at(std::size_t n, std::size_t h, std::size_t w) { return scores[(n * height + h) * width + w]; }
  double at(std::size_t n, std::size_t h, std::size_t w) const { return scores[(n * height + h) * width + w]; }
};

struct GaussianModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // sample covariance + epsilon * I
  double epsilon = 0.0;
};

struct DiscriminatorConfig {
  Method method = Method::lof;
  std::size_t lof_k = 6;
  double epsilon = 0.01;
};

/// Distance from each row to its nearest other row.
std::vector<double> nn_scores(const PositionGroup& group);

/// Batch mean and unbiased covariance (every sample included), regularized by epsilon * I.
GaussianModel gaussian_fit(const PositionGroup& group, double epsilon);

/// Mahalanobis distance of every row under `model`, solved through a Cholesky factor.
std::vector<double> mahalanobis_scores(const PositionGroup& group, const GaussianModel& model);

/// Local outlier factor with exactly-k neighborhoods (ties at the k-th distance go to the lower
/// index). Scores near 1 are inliers; larger means sparser than the neighbors.
std::vector<double> lof_scores(const PositionGroup& group, std::size_t k);

/// Scores every patch by grouping the batch per position. Method::none yields all-ones.
ScoreTensor score_all(const FeatureDataset& dataset, const DiscriminatorConfig& config);

/// SPS1 audit export: "SPS1\0", u32 version, u32 N, u32 h, u32 w, u32 method, N*h*w f64.
void write_score_file(const ScoreTensor& scores, const std::filesystem::path& path);
ScoreTensor read_score_file(const std::filesystem::path& path);

}  // namespace softpatch
