#include "softpatch/coreset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "softpatch/error.hpp"
#include "softpatch/parallel.hpp"

namespace softpatch {

namespace {

constexpr std::string_view kBankMagic{"SPB1\0", 5};
constexpr std::uint32_t kBankVersion = 1;
constexpr std::size_t kParallelGrain = 2048;

Matrix pool_matrix(const PatchPool& pool) {
  Matrix m(static_cast<Eigen::Index>(pool.size()), static_cast<Eigen::Index>(pool.dim));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto row = pool.row(i);
    for (std::size_t c = 0; c < pool.dim; ++c)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c];
  }
  return m;
}

}  // namespace

std::string_view to_string(Sampler sampler) { return sampler == Sampler::greedy ? "greedy" : "random"; }

Sampler parse_sampler(std::string_view text) {
  if (text == "greedy") return Sampler::greedy;
  if (text == "random") return Sampler::random;
  throw InputError("unknown sampler '" + std::string(text) + "' (expected greedy|random)");
}

std::string canonical_config(const DiscriminatorConfig& discriminator, const DenoiseConfig& denoise) {
  std::ostringstream out;
  out << "discriminator.method=" << to_string(discriminator.method) << '\n'
      << "discriminator.lof_k=" << discriminator.lof_k << '\n'
      << "discriminator.epsilon=" << format_real(discriminator.epsilon) << '\n'
      << "denoise.tau=" << format_real(denoise.tau) << '\n'
      << "denoise.sampler=" << to_string(denoise.sampler) << '\n'
      << "denoise.sampling_ratio=" << format_real(denoise.sampling_ratio) << '\n'
      << "denoise.projection_dim="
      << (denoise.projection_dim ? std::to_string(*denoise.projection_dim) : std::string("none")) << '\n'
      << "denoise.soft_weights=" << (denoise.soft_weights ? 1 : 0) << '\n'
      << "seed=" << denoise.seed << '\n';
  return out.str();
}

Digest config_fingerprint(const DiscriminatorConfig& discriminator, const DenoiseConfig& denoise) {
  return sha256(canonical_config(discriminator, denoise));
}

PatchPool threshold_filter(const FeatureDataset& dataset, const ScoreTensor& scores, double tau) {
  if (!(tau >= 0.0 && tau < 1.0)) throw InputError("tau must lie in [0, 1)");
  if (scores.images != dataset.size() || scores.height != dataset.shape.height ||
      scores.width != dataset.shape.width)
    throw InputError("score tensor shape does not match dataset");
  const std::size_t total = scores.scores.size();
  if (total == 0) throw InfeasibleError("empty result: no patches to filter");
  for (double s : scores.scores)
    if (!std::isfinite(s)) throw InputError("non-finite outlier score");

  const auto removed = static_cast<std::size_t>(std::floor(tau * static_cast<double>(total) + 1e-9));
  const std::size_t keep = total - removed;
  if (keep == 0) throw InfeasibleError("empty result: tau removes every patch");

  std::vector<double> sorted = scores.scores;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(keep - 1), sorted.end());
  const double cut = sorted[keep - 1];

  PatchPool pool;
  pool.dim = dataset.shape.channels;
  pool.vectors.reserve(keep * pool.dim);
  pool.weights.reserve(keep);
  pool.provenance.reserve(keep);
  for (std::size_t n = 0; n < scores.images; ++n) {
    for (std::size_t h = 0; h < scores.height; ++h) {
      for (std::size_t w = 0; w < scores.width; ++w) {
        const double s = scores.at(n, h, w);
        if (s > cut) continue;
        const auto patch = dataset.maps[n].patch(h, w);
        pool.vectors.insert(pool.vectors.end(), patch.begin(), patch.end());
        pool.weights.push_back(s);
        pool.provenance.push_back(
            {static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w)});
      }
    }
  }
  return pool;
}

PatchPool normalize_weights(PatchPool pool, Method method) {
  if (pool.size() == 0) throw InputError("normalize_weights: empty pool");
  switch (method) {
    case Method::lof:
      return pool;
    case Method::none:
      std::fill(pool.weights.begin(), pool.weights.end(), 1.0);
      return pool;
    case Method::nearest:
    case Method::gaussian:
      break;
  }
  double min_positive = 0.0;
  for (double w : pool.weights)
    if (w > 0.0 && (min_positive == 0.0 || w < min_positive)) min_positive = w;
  const double floor_value = min_positive > 0.0 ? min_positive : 1.0;
  for (double& w : pool.weights)
    if (!(w > 0.0)) w = floor_value;
  const double mean = std::accumulate(pool.weights.begin(), pool.weights.end(), 0.0) /
                      static_cast<double>(pool.weights.size());
  for (double& w : pool.weights) w /= mean;
  return pool;
}

Matrix project(const Matrix& vectors, std::size_t dim, std::uint64_t seed) {
  const auto in_dim = static_cast<std::size_t>(vectors.cols());
  if (dim == 0 || dim > in_dim) throw InputError("projection dim must lie in [1, " + std::to_string(in_dim) + "]");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  Matrix r(static_cast<Eigen::Index>(in_dim), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < r.rows(); ++i)
    for (Eigen::Index j = 0; j < r.cols(); ++j) r(i, j) = normal(rng) * scale;
  return vectors * r;
}

std::size_t coreset_size(std::size_t m, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw InputError("sampling ratio must lie in (0, 1]");
  const auto k = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(m) - 1e-9));
  return std::clamp<std::size_t>(k, m == 0 ? 0 : 1, m);
}

std::vector<std::size_t> greedy_select(const PatchPool& pool, double ratio, std::optional<std::size_t> projection_dim,
                                       std::uint64_t seed) {
  const std::size_t m = pool.size();
  if (m == 0) throw InputError("greedy_select: empty pool");
  const std::size_t k = coreset_size(m, ratio);

  Matrix points = pool_matrix(pool);
  if (projection_dim) points = project(points, *projection_dim, seed);

  std::vector<std::size_t> selected;
  selected.reserve(k);
  std::vector<char> taken(m, 0);
  std::vector<double> min_sq(m, std::numeric_limits<double>::infinity());

  auto absorb = [&](std::size_t center) {
    selected.push_back(center);
    taken[center] = 1;
    const auto c = points.row(static_cast<Eigen::Index>(center));
    parallel_for(
        0, m,
        [&](std::size_t j) {
          const double d = (points.row(static_cast<Eigen::Index>(j)) - c).squaredNorm();
          if (d < min_sq[j]) min_sq[j] = d;
        },
        kParallelGrain);
  };

  absorb(0);
  while (selected.size() < k) {
    std::size_t best = m;
    double best_d = -1.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (!taken[j] && min_sq[j] > best_d) {
        best_d = min_sq[j];
        best = j;
      }
    }
    absorb(best);
  }
  return selected;
}

std::vector<std::size_t> random_select(const PatchPool& pool, double ratio, std::uint64_t seed) {
  const std::size_t m = pool.size();
  if (m == 0) throw InputError("random_select: empty pool");
  const std::size_t k = coreset_size(m, ratio);
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first k slots are a uniform sample without replacement.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, m - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

MemoryBank build_bank(const FeatureDataset& dataset, const ScoreTensor& scores, const DenoiseConfig& config,
                      const DiscriminatorConfig& discriminator, BuildStats* stats) {
  const Method method = discriminator.method;
  if (scores.method != method) throw InputError("score tensor was produced by a different method");
  const double tau = method == Method::none ? 0.0 : config.tau;

  PatchPool pool = normalize_weights(threshold_filter(dataset, scores, tau), method);
  if (!config.soft_weights) std::fill(pool.weights.begin(), pool.weights.end(), 1.0);

  std::optional<std::size_t> projection;
  if (config.projection_dim && *config.projection_dim < pool.dim) projection = config.projection_dim;

  const std::vector<std::size_t> chosen = config.sampler == Sampler::greedy
                                              ? greedy_select(pool, config.sampling_ratio, projection, config.seed)
                                              : random_select(pool, config.sampling_ratio, config.seed);

  MemoryBank bank;
  bank.dim = pool.dim;
  bank.entries.reserve(chosen.size() * pool.dim);
  bank.soft_weights.reserve(chosen.size());
  bank.provenance.reserve(chosen.size());
  for (std::size_t i : chosen) {
    const auto row = pool.row(i);
    bank.entries.insert(bank.entries.end(), row.begin(), row.end());
    bank.soft_weights.push_back(pool.weights[i]);
    bank.provenance.push_back(pool.provenance[i]);
  }
  bank.config_fingerprint = config_fingerprint(discriminator, config);

  if (stats) {
    stats->total_patches = scores.scores.size();
    stats->retained_patches = pool.size();
    stats->bank_size = bank.size();
    const auto [lo, hi] = std::minmax_element(bank.soft_weights.begin(), bank.soft_weights.end());
    stats->weight_min = *lo;
    stats->weight_max = *hi;
    stats->weight_mean = std::accumulate(bank.soft_weights.begin(), bank.soft_weights.end(), 0.0) /
                         static_cast<double>(bank.size());
  }
  return bank;
}

std::vector<std::uint8_t> encode_bank(const MemoryBank& bank) {
  detail::ByteWriter w;
  w.reserve(64 + bank.entries.size() * 4 + bank.size() * 20);
  w.raw(kBankMagic);
  w.u32(kBankVersion);
  w.u32(static_cast<std::uint32_t>(bank.size()));
  w.u32(static_cast<std::uint32_t>(bank.dim));
  for (float v : bank.entries) w.f32(v);
  for (double v : bank.soft_weights) w.f64(v);
  for (const auto& p : bank.provenance) {
    w.u32(p.image);
    w.u32(p.h);
    w.u32(p.w);
  }
  w.raw(bank.config_fingerprint);
  return w.bytes();
}

MemoryBank decode_bank(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (!r.expect_magic(kBankMagic)) throw FormatError("bad magic");
  if (r.u32() != kBankVersion) throw FormatError("unsupported SPB1 version");
  MemoryBank bank;
  const std::uint32_t k = r.u32();
  bank.dim = r.u32();
  const std::uint64_t floats = detail::checked_volume(k, bank.dim, 1, std::uint64_t{1} << 40);
  const std::uint64_t expected = floats * 4 + std::uint64_t{k} * (8 + 12) + 32;
  if (r.remaining() < expected) throw FormatError("truncated payload");
  if (r.remaining() > expected) throw FormatError("trailing data after payload");
  bank.entries.resize(floats);
  for (auto& v : bank.entries) v = r.f32();
  bank.soft_weights.resize(k);
  for (auto& v : bank.soft_weights) v = r.f64();
  bank.provenance.resize(k);
  for (auto& p : bank.provenance) {
    p.image = r.u32();
    p.h = r.u32();
    p.w = r.u32();
  }
  const auto fp = r.take(32);
  std::copy(fp.begin(), fp.end(), bank.config_fingerprint.begin());
  for (double wgt : bank.soft_weights)
    if (!(wgt > 0.0) || !std::isfinite(wgt)) throw FormatError("bank soft weight is not positive and finite");
  return bank;
}

void write_bank(const MemoryBank& bank, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_bank(bank));
}

MemoryBank read_bank(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("missing bank file: " + path.string());
  return decode_bank(detail::read_file_bytes(path));
}

}  // namespace softpatch
