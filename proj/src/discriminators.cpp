#include "softpatch/discriminators.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>

#include "binary_io.hpp"
#include "softpatch/error.hpp"
#include "softpatch/parallel.hpp"

namespace softpatch {

namespace {

constexpr std::string_view kScoreMagic{"SPS1\0", 5};
constexpr std::uint32_t kScoreVersion = 1;
constexpr double kLrdGuard = 1e-12;

void require_pairs(const PositionGroup& group) {
  if (group.size() < 2) throw InputError("need at least two samples");
}

// Symmetric N x N Euclidean distances, computed from explicit differences so that duplicate
// rows come out exactly zero.
Matrix pairwise_distances(const Matrix& x) {
  const Eigen::Index n = x.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dist = (x.row(i) - x.row(j)).norm();
      d(i, j) = dist;
      d(j, i) = dist;
    }
  }
  return d;
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::none: return "none";
    case Method::nearest: return "nearest";
    case Method::gaussian: return "gaussian";
    case Method::lof: return "lof";
  }
  return "unknown";
}

Method parse_method(std::string_view text) {
  if (text == "none") return Method::none;
  if (text == "nearest") return Method::nearest;
  if (text == "gaussian") return Method::gaussian;
  if (text == "lof") return Method::lof;
  throw InputError("unknown method '" + std::string(text) + "' (expected none|nearest|gaussian|lof)");
}

PositionGroup gather_group(const FeatureDataset& dataset, std::size_t h, std::size_t w) {
  PositionGroup group;
  group.h = h;
  group.w = w;
  group.vectors.resize(static_cast<Eigen::Index>(dataset.size()), dataset.shape.channels);
  for (std::size_t n = 0; n < dataset.size(); ++n) {
    const auto patch = dataset.maps[n].patch(h, w);
    for (std::size_t c = 0; c < patch.size(); ++c)
      group.vectors(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c)) = patch[c];
  }
  return group;
}

std::vector<double> nn_scores(const PositionGroup& group) {
  require_pairs(group);
  const Matrix d = pairwise_distances(group.vectors);
  const std::size_t n = group.size();
  std::vector<double> out(n, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) out[i] = std::min(out[i], d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  return out;
}

GaussianModel gaussian_fit(const PositionGroup& group, double epsilon) {
  require_pairs(group);
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
  GaussianModel model;
  model.epsilon = epsilon;
  model.mean = group.vectors.colwise().mean().transpose();
  const Matrix centered = group.vectors.rowwise() - model.mean.transpose();
  const auto dim = group.vectors.cols();
  model.covariance = (centered.transpose() * centered) / static_cast<double>(group.size() - 1);
  model.covariance += epsilon * Eigen::MatrixXd::Identity(dim, dim);
  return model;
}

std::vector<double> mahalanobis_scores(const PositionGroup& group, const GaussianModel& model) {
  if (group.vectors.cols() != model.mean.size())
    throw InputError("mahalanobis_scores: model dimension does not match group");
  const Eigen::LLT<Eigen::MatrixXd> llt(model.covariance);
  // Cannot fail for epsilon > 0: the covariance is PSD plus a positive diagonal.
  assert(llt.info() == Eigen::Success);
  if (llt.info() != Eigen::Success) throw std::logic_error("covariance factorization failed");

  const Matrix centered = group.vectors.rowwise() - model.mean.transpose();
  // L^{-1} (x - mu) for all rows at once; squared column norms are the squared distances.
  const Eigen::MatrixXd whitened = llt.matrixL().solve(centered.transpose());
  std::vector<double> out(group.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::sqrt(whitened.col(static_cast<Eigen::Index>(i)).squaredNorm());
  return out;
}

std::vector<double> lof_scores(const PositionGroup& group, std::size_t k) {
  const std::size_t n = group.size();
  if (k < 1 || k + 1 > n) throw InputError("k out of range");
  const Matrix d = pairwise_distances(group.vectors);
  auto dist = [&](std::size_t a, std::size_t b) {
    return d(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  };

  std::vector<std::vector<std::size_t>> neighbors(n);
  std::vector<double> k_distance(n);
  std::vector<std::size_t> order;
  order.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    order.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    auto closer = [&](std::size_t a, std::size_t b) {
      const double da = dist(i, a), db = dist(i, b);
      return da < db || (da == db && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), closer);
    neighbors[i].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    k_distance[i] = dist(i, neighbors[i].back());
  }

  std::vector<double> lrd(n);
  for (std::size_t i = 0; i < n; ++i) {
    double reach_sum = 0.0;
    for (std::size_t b : neighbors[i]) reach_sum += std::max(k_distance[b], dist(i, b));
    lrd[i] = 1.0 / (reach_sum / static_cast<double>(k) + kLrdGuard);
  }

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double lrd_sum = 0.0;
    for (std::size_t b : neighbors[i]) lrd_sum += lrd[b];
    out[i] = (lrd_sum / static_cast<double>(k)) / lrd[i];
  }
  return out;
}

ScoreTensor score_all(const FeatureDataset& dataset, const DiscriminatorConfig& config) {
  const std::size_t n = dataset.size();
  ScoreTensor out;
  out.method = config.method;
  out.images = n;
  out.height = dataset.shape.height;
  out.width = dataset.shape.width;
  out.scores.assign(n * out.height * out.width, 1.0);
  if (config.method == Method::none) return out;

  if (n < 2) throw InputError("need at least two samples");
  if (config.method == Method::lof && (config.lof_k < 1 || config.lof_k >= n)) throw InputError("k out of range");

  const std::size_t positions = out.height * out.width;
  parallel_for(0, positions, [&](std::size_t p) {
    const std::size_t h = p / out.width, w = p % out.width;
    const PositionGroup group = gather_group(dataset, h, w);
    std::vector<double> scores;
    switch (config.method) {
      case Method::nearest: scores = nn_scores(group); break;
      case Method::gaussian: scores = mahalanobis_scores(group, gaussian_fit(group, config.epsilon)); break;
      case Method::lof: scores = lof_scores(group, config.lof_k); break;
      case Method::none: break;
    }
    for (std::size_t i = 0; i < n; ++i) out.at(i, h, w) = scores[i];
  });
  return out;
}

void write_score_file(const ScoreTensor& scores, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.raw(kScoreMagic);
  w.u32(kScoreVersion);
  w.u32(static_cast<std::uint32_t>(scores.images));
  w.u32(static_cast<std::uint32_t>(scores.height));
  w.u32(static_cast<std::uint32_t>(scores.width));
  w.u32(static_cast<std::uint32_t>(scores.method));
  for (double s : scores.scores) w.f64(s);
  detail::write_file_bytes(path, w.bytes());
}

ScoreTensor read_score_file(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes);
  if (!r.expect_magic(kScoreMagic)) throw FormatError("bad magic");
  if (r.u32() != kScoreVersion) throw FormatError("unsupported SPS1 version");
  ScoreTensor out;
  out.images = r.u32();
  out.height = r.u32();
  out.width = r.u32();
  const std::uint32_t method = r.u32();
  if (method > static_cast<std::uint32_t>(Method::lof)) throw FormatError("unknown method code");
  out.method = static_cast<Method>(method);
  const std::uint64_t count = detail::checked_volume(out.images, out.height, out.width, std::uint64_t{1} << 60);
  if (r.remaining() != count * 8) throw FormatError("truncated payload");
  out.scores.resize(count);
  for (auto& s : out.scores) s = r.f64();
  return out;
}

}  // namespace softpatch
