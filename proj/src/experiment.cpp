#include "softpatch/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "softpatch/error.hpp"
#include "softpatch/inference.hpp"
#include "softpatch/parallel.hpp"

namespace softpatch {

namespace fs = std::filesystem;

namespace {

constexpr double kDefectArea = 0.2;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id)};
  return std::mt19937_64(seq);
}

// First k entries of a seeded partial Fisher-Yates shuffle of [0, n).
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

void check_spec(const SyntheticSpec& spec) {
  if (spec.n_images == 0 || spec.height == 0 || spec.width == 0 || spec.channels == 0)
    throw InputError("synthetic spec: all sizes must be positive");
  if (!(spec.outlier_fraction >= 0.0 && spec.outlier_fraction < 0.5))
    throw InputError("synthetic spec: outlier_fraction must lie in [0, 0.5)");
  if (!(spec.cluster_std > 0.0)) throw InputError("synthetic spec: cluster_std must be positive");
}

struct DefectBlock {
  std::uint32_t top = 0, left = 0, rows = 0, cols = 0;

  bool contains(std::size_t h, std::size_t w) const {
    return h >= top && h < top + rows && w >= left && w < left + cols;
  }
};

class SyntheticWorld {
 public:
  explicit SyntheticWorld(const SyntheticSpec& spec) : spec_(spec) {
    check_spec(spec);
    auto rng = stream(spec.seed, 0);
    std::normal_distribution<double> normal(0.0, spec.mean_scale * spec.cluster_std);
    centers_.resize(std::size_t{spec.height} * spec.width * spec.channels);
    for (double& c : centers_) c = normal(rng);
  }

  const SyntheticSpec& spec() const { return spec_; }

  DefectBlock draw_block(std::mt19937_64& rng) const {
    DefectBlock b;
    const double cells = kDefectArea * spec_.height * spec_.width;
    b.rows = std::clamp<std::uint32_t>(
        static_cast<std::uint32_t>(std::lround(std::sqrt(kDefectArea) * spec_.height)), 1, spec_.height);
    b.cols = std::clamp<std::uint32_t>(static_cast<std::uint32_t>(std::lround(cells / b.rows)), 1, spec_.width);
    b.top = std::uniform_int_distribution<std::uint32_t>(0, spec_.height - b.rows)(rng);
    b.left = std::uniform_int_distribution<std::uint32_t>(0, spec_.width - b.cols)(rng);
    return b;
  }

  /// Draws one map; when `defect` is set, patches inside the block are shifted.
  FeatureMap draw(std::mt19937_64& rng, const std::optional<DefectBlock>& defect, std::string id) const {
    FeatureMap map;
    map.image_id = std::move(id);
    map.shape = {spec_.channels, spec_.height, spec_.width};
    map.data.resize(map.shape.volume());
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<double> direction;
    if (defect) {
      direction.resize(spec_.channels);
      double norm = 0.0;
      while (norm == 0.0) {
        for (double& d : direction) d = normal(rng);
        norm = std::sqrt(std::inner_product(direction.begin(), direction.end(), direction.begin(), 0.0));
      }
      for (double& d : direction) d *= spec_.outlier_shift * spec_.cluster_std / norm;
    }

    for (std::size_t h = 0; h < spec_.height; ++h) {
      for (std::size_t w = 0; w < spec_.width; ++w) {
        const bool shifted = defect && defect->contains(h, w);
        auto patch = map.patch(h, w);
        const double* center = centers_.data() + (h * spec_.width + w) * spec_.channels;
        for (std::size_t c = 0; c < spec_.channels; ++c) {
          double v = center[c] + spec_.cluster_std * normal(rng);
          if (shifted) v += direction[c];
          patch[c] = static_cast<float>(v);
        }
      }
    }
    return map;
  }

 private:
  SyntheticSpec spec_;
  std::vector<double> centers_;
};

GrayImage block_mask(const DefectBlock& block, std::uint32_t height, std::uint32_t width, std::uint32_t stride) {
  GrayImage mask{width * stride, height * stride, {}};
  mask.pixels.assign(std::size_t{mask.width} * mask.height, 0);
  for (std::uint32_t y = block.top * stride; y < (block.top + block.rows) * stride; ++y)
    for (std::uint32_t x = block.left * stride; x < (block.left + block.cols) * stride; ++x)
      mask.pixels[std::size_t{y} * mask.width + x] = 255;
  return mask;
}

std::string numbered(const std::string& prefix, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03zu", i);
  return prefix + buf;
}

DatasetManifest subset(const DatasetManifest& m, const std::string& category) {
  DatasetManifest out;
  for (const auto& e : m.entries)
    if (e.category == category) out.entries.push_back(e);
  return out;
}

}  // namespace

InjectedManifests inject_noise(const DatasetManifest& train, const DatasetManifest& test,
                               const NoiseInjectionSpec& spec) {
  if (!(spec.noise_ratio >= 0.0 && spec.noise_ratio <= 0.5))
    throw InputError("noise ratio must lie in [0, 0.5]");
  InjectedManifests out{train, test};
  if (spec.noise_ratio == 0.0) return out;

  std::vector<std::string> categories;
  for (const auto& e : train.entries)
    if (std::find(categories.begin(), categories.end(), e.category) == categories.end())
      categories.push_back(e.category);

  auto rng = stream(spec.seed, 0x6e6f697365);
  std::set<std::size_t> moved;
  for (const auto& category : categories) {
    const auto clean = static_cast<std::size_t>(
        std::count_if(train.entries.begin(), train.entries.end(), [&](const auto& e) { return e.category == category; }));
    const auto count = static_cast<std::size_t>(std::llround(spec.noise_ratio * static_cast<double>(clean)));
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < test.entries.size(); ++i)
      if (test.entries[i].category == category && test.entries[i].label == Label::anomalous) candidates.push_back(i);
    if (candidates.size() < count)
      throw InfeasibleError("category '" + category + "' has " + std::to_string(candidates.size()) +
                            " anomalous test images, " + std::to_string(count) + " requested");
    for (std::size_t pick : sample_indices(candidates.size(), count, rng)) moved.insert(candidates[pick]);
  }

  for (std::size_t i : moved) {
    ManifestEntry e = test.entries[i];
    e.injected = true;
    out.train.entries.push_back(std::move(e));
  }
  if (spec.setting == Setting::no_overlap) {
    out.test.entries.clear();
    for (std::size_t i = 0; i < test.entries.size(); ++i)
      if (!moved.count(i)) out.test.entries.push_back(test.entries[i]);
  }
  validate_manifest(out.train);
  return out;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  const SyntheticWorld world(spec);
  auto rng = stream(spec.seed, 1);
  const auto outliers = static_cast<std::size_t>(std::llround(spec.outlier_fraction * static_cast<double>(spec.n_images)));

  SyntheticData out;
  out.image_outlier.assign(spec.n_images, 0);
  for (std::size_t i : sample_indices(spec.n_images, outliers, rng)) out.image_outlier[i] = 1;
  out.patch_outlier.assign(spec.n_images * spec.height * spec.width, 0);

  std::vector<FeatureMap> maps;
  maps.reserve(spec.n_images);
  for (std::size_t n = 0; n < spec.n_images; ++n) {
    std::optional<DefectBlock> block;
    if (out.image_outlier[n]) {
      block = world.draw_block(rng);
      for (std::size_t h = 0; h < spec.height; ++h)
        for (std::size_t w = 0; w < spec.width; ++w)
          if (block->contains(h, w)) out.patch_outlier[(n * spec.height + h) * spec.width + w] = 1;
    }
    maps.push_back(world.draw(rng, block, numbered("img_", n)));
  }
  out.dataset = make_dataset(std::move(maps));
  return out;
}

BenchmarkPaths write_benchmark(const BenchmarkSpec& spec, const fs::path& dir) {
  const SyntheticWorld world(spec.synthetic);
  const auto& s = spec.synthetic;
  fs::create_directories(dir / "features");
  fs::create_directories(dir / "masks");
  const std::uint32_t image_h = s.height * spec.patch_stride;
  const std::uint32_t image_w = s.width * spec.patch_stride;

  auto entry_for = [&](const std::string& id, Label label) {
    ManifestEntry e;
    e.feature_path = fs::absolute(dir / "features" / (id + ".spf")).lexically_normal();
    e.image_id = id;
    e.label = label;
    e.image_height = image_h;
    e.image_width = image_w;
    e.category = spec.category;
    return e;
  };

  DatasetManifest train, test;
  auto train_rng = stream(s.seed, 1);
  for (std::size_t i = 0; i < s.n_images; ++i) {
    auto e = entry_for(numbered("train_", i), Label::normal);
    write_feature_file(world.draw(train_rng, std::nullopt, e.image_id), e.feature_path);
    train.entries.push_back(std::move(e));
  }
  auto normal_rng = stream(s.seed, 2);
  for (std::size_t i = 0; i < spec.test_normal; ++i) {
    auto e = entry_for(numbered("test_good_", i), Label::normal);
    write_feature_file(world.draw(normal_rng, std::nullopt, e.image_id), e.feature_path);
    test.entries.push_back(std::move(e));
  }
  auto defect_rng = stream(s.seed, 3);
  for (std::size_t i = 0; i < spec.test_anomalous; ++i) {
    auto e = entry_for(numbered("test_defect_", i), Label::anomalous);
    const DefectBlock block = world.draw_block(defect_rng);
    write_feature_file(world.draw(defect_rng, block, e.image_id), e.feature_path);
    e.mask_path = fs::absolute(dir / "masks" / (e.image_id + ".pgm")).lexically_normal();
    write_pgm(block_mask(block, s.height, s.width, spec.patch_stride), *e.mask_path);
    test.entries.push_back(std::move(e));
  }

  BenchmarkPaths paths{dir / "train.txt", dir / "test.txt"};
  write_manifest(train, paths.train_manifest);
  write_manifest(test, paths.test_manifest);
  return paths;
}

void FeatureCache::preload(const DatasetManifest& manifest) {
  std::vector<fs::path> missing;
  for (const auto& e : manifest.entries)
    if (!maps_.count(e.feature_path) &&
        std::find(missing.begin(), missing.end(), e.feature_path) == missing.end())
      missing.push_back(e.feature_path);
  std::vector<FeatureMap> loaded(missing.size());
  parallel_for(0, missing.size(), [&](std::size_t i) { loaded[i] = read_feature_file(missing[i]); });
  for (std::size_t i = 0; i < missing.size(); ++i) maps_.emplace(missing[i], std::move(loaded[i]));
}

FeatureDataset FeatureCache::dataset(const DatasetManifest& manifest) {
  if (manifest.entries.empty()) throw InputError("empty dataset");
  validate_manifest(manifest);
  preload(manifest);
  std::vector<FeatureMap> maps;
  maps.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    FeatureMap m = maps_.at(e.feature_path);
    m.image_id = e.image_id;
    maps.push_back(std::move(m));
  }
  return make_dataset(std::move(maps));
}

EvalReport train_and_evaluate(FeatureCache& cache, const DatasetManifest& train, const DatasetManifest& test,
                              const PipelineConfig& config) {
  std::vector<std::string> categories;
  for (const auto& e : test.entries)
    if (std::find(categories.begin(), categories.end(), e.category) == categories.end())
      categories.push_back(e.category);

  EvalInputs inputs;
  for (const auto& category : categories) {
    const DatasetManifest train_c = subset(train, category);
    if (train_c.entries.empty()) throw InputError("no training images for category '" + category + "'");
    const FeatureDataset train_set = cache.dataset(train_c);
    const ScoreTensor scores = score_all(train_set, config.discriminator);
    const MemoryBank bank = build_bank(train_set, scores, config.denoise, config.discriminator);

    const DatasetManifest test_c = subset(test, category);
    const FeatureDataset test_set = cache.dataset(test_c);
    const bool masks = std::any_of(test_c.entries.begin(), test_c.entries.end(),
                                   [](const auto& e) { return e.mask_path.has_value(); });
    for (std::size_t i = 0; i < test_set.size(); ++i) {
      AnomalyResult r = score_image(bank, test_set.maps[i]);
      inputs.image_scores[r.image_id] = r.image_score;
      if (config.pixel_maps && masks) {
        const auto& e = test_c.entries[i];
        r = anomaly_map(std::move(r), e.image_height, e.image_width, config.sigma);
        inputs.pixel_maps[r.image_id] = std::move(r.pixel_map);
      }
    }
  }
  EvalReport report = evaluate(inputs, test);
  report.method = std::string(to_string(config.discriminator.method));
  report.seeds = {config.denoise.seed};
  report.fingerprint = to_hex(config_fingerprint(config.discriminator, config.denoise));
  return report;
}

SweepResult run_sweep(const DatasetManifest& train, const DatasetManifest& test, const SweepConfig& config) {
  if (config.methods.empty()) throw InputError("sweep: no methods");
  if (config.repeats == 0) throw InputError("sweep: repeats must be positive");
  FeatureCache cache;
  cache.preload(train);
  cache.preload(test);

  SweepResult result;
  for (double ratio : config.ratios) {
    for (Setting setting : config.settings) {
      for (const auto& method : config.methods) {
        std::vector<EvalReport> reps;
        for (std::size_t r = 0; r < config.repeats; ++r) {
          const std::uint64_t seed = config.seed + r;
          const auto injected = inject_noise(train, test, {ratio, setting, seed});
          PipelineConfig pipeline{method, config.denoise, config.sigma, config.pixel_maps};
          pipeline.denoise.seed = seed;
          EvalReport report = train_and_evaluate(cache, injected.train, injected.test, pipeline);
          report.noise_ratio = ratio;
          report.setting = setting;
          result.runs.push_back({ratio, setting, report.method, seed, report});
          reps.push_back(std::move(report));
        }
        result.cells.push_back(average_reports(reps));
      }
    }
  }
  return result;
}

}  // namespace softpatch
