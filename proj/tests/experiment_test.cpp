#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "softpatch/error.hpp"
#include "softpatch/experiment.hpp"
#include "support.hpp"

using namespace softpatch;

namespace {

DatasetManifest make_list(std::size_t normals, std::size_t anomalies, const std::string& prefix,
                          const std::string& category = "default") {
  DatasetManifest m;
  for (std::size_t i = 0; i < normals + anomalies; ++i) {
    ManifestEntry e;
    e.image_id = prefix + std::to_string(i);
    e.feature_path = "/f/" + e.image_id + ".spf";
    e.label = i < normals ? Label::normal : Label::anomalous;
    e.image_height = 8;
    e.image_width = 8;
    e.category = category;
    m.entries.push_back(e);
  }
  return m;
}

std::size_t count_label(const DatasetManifest& m, Label l) {
  return static_cast<std::size_t>(
      std::count_if(m.entries.begin(), m.entries.end(), [&](const ManifestEntry& e) { return e.label == l; }));
}

}  // namespace

TEST(Inject, ZeroRatioIsIdentity) {
  const auto train = make_list(10, 0, "tr"), test = make_list(5, 5, "te");
  const auto out = inject_noise(train, test, {0.0, Setting::no_overlap, 3});
  EXPECT_EQ(out.train, train);
  EXPECT_EQ(out.test, test);
}

TEST(Inject, NoOverlapCounts) {
  const auto train = make_list(100, 0, "tr"), test = make_list(0, 60, "te");
  const auto out = inject_noise(train, test, {0.1, Setting::no_overlap, 3});
  EXPECT_EQ(out.train.entries.size(), 110u);
  EXPECT_EQ(count_label(out.test, Label::anomalous), 50u);
  EXPECT_EQ(out.train.entries.size() + out.test.entries.size(), 160u);
  std::set<std::string> moved;
  for (std::size_t i = 100; i < 110; ++i) {
    EXPECT_TRUE(out.train.entries[i].injected);
    moved.insert(out.train.entries[i].image_id);
  }
  for (const auto& e : out.test.entries) EXPECT_EQ(moved.count(e.image_id), 0u);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(out.train.entries[i], train.entries[i]);
}

TEST(Inject, OverlapKeepsTest) {
  const auto train = make_list(40, 0, "tr"), test = make_list(10, 10, "te");
  const auto out = inject_noise(train, test, {0.1, Setting::overlap, 1});
  EXPECT_EQ(out.train.entries.size(), 44u);
  EXPECT_EQ(out.test, test);
}

TEST(Inject, DeterministicPerSeed) {
  const auto train = make_list(50, 0, "tr"), test = make_list(0, 30, "te");
  const auto a = inject_noise(train, test, {0.2, Setting::no_overlap, 5});
  EXPECT_EQ(a.train, inject_noise(train, test, {0.2, Setting::no_overlap, 5}).train);
  EXPECT_NE(a.train, inject_noise(train, test, {0.2, Setting::no_overlap, 6}).train);
}

TEST(Inject, PerCategoryCounts) {
  auto train = make_list(20, 0, "a", "a");
  const auto train_b = make_list(40, 0, "b", "b");
  train.entries.insert(train.entries.end(), train_b.entries.begin(), train_b.entries.end());
  auto test = make_list(0, 5, "ta", "a");
  const auto test_b = make_list(0, 5, "tb", "b");
  test.entries.insert(test.entries.end(), test_b.entries.begin(), test_b.entries.end());
  const auto out = inject_noise(train, test, {0.1, Setting::no_overlap, 0});
  std::size_t a = 0, b = 0;
  for (const auto& e : out.train.entries)
    if (e.injected) (e.category == "a" ? a : b) += 1;
  EXPECT_EQ(a, 2u);
  EXPECT_EQ(b, 4u);
}

TEST(Inject, InsufficientAnomaliesIsInfeasible) {
  EXPECT_THROW(inject_noise(make_list(100, 0, "tr"), make_list(5, 3, "te"), {0.1, Setting::overlap, 0}),
               InfeasibleError);
  EXPECT_THROW(inject_noise(make_list(10, 0, "tr"), make_list(5, 3, "te"), {0.6, Setting::overlap, 0}), InputError);
}

TEST(Synthetic, CleanWhenFractionZero) {
  SyntheticSpec spec;
  spec.outlier_fraction = 0.0;
  spec.n_images = 10;
  const auto d = generate_synthetic(spec);
  EXPECT_EQ(d.image_outlier, std::vector<std::uint8_t>(10, 0));
  EXPECT_EQ(d.patch_outlier, std::vector<std::uint8_t>(640, 0));
}

TEST(Synthetic, DeterministicWithLocalizedBlocks) {
  SyntheticSpec spec;
  const auto a = generate_synthetic(spec), b = generate_synthetic(spec);
  ASSERT_EQ(a.dataset.size(), 60u);
  for (std::size_t i = 0; i < 60; ++i) EXPECT_EQ(a.dataset.maps[i].data, b.dataset.maps[i].data);
  EXPECT_EQ(a.patch_outlier, b.patch_outlier);
  EXPECT_EQ(std::count(a.image_outlier.begin(), a.image_outlier.end(), 1), 6);
  for (std::size_t n = 0; n < 60; ++n) {
    std::size_t flagged = 0, hmin = 8, hmax = 0, wmin = 8, wmax = 0;
    for (std::size_t h = 0; h < 8; ++h)
      for (std::size_t w = 0; w < 8; ++w)
        if (a.patch_outlier[(n * 8 + h) * 8 + w]) {
          ++flagged;
          hmin = std::min(hmin, h);
          hmax = std::max(hmax, h);
          wmin = std::min(wmin, w);
          wmax = std::max(wmax, w);
        }
    if (!a.image_outlier[n]) {
      EXPECT_EQ(flagged, 0u);
      continue;
    }
    EXPECT_EQ(flagged, (hmax - hmin + 1) * (wmax - wmin + 1)) << "block must be contiguous";
    EXPECT_NEAR(static_cast<double>(flagged) / 64.0, 0.2, 0.05);
  }
  spec.seed = 8;
  EXPECT_NE(generate_synthetic(spec).dataset.maps[0].data, a.dataset.maps[0].data);
}

TEST(Synthetic, PlantedPatchesRankInLofTail) {
  const auto d = generate_synthetic(SyntheticSpec{});
  const auto scores = score_all(d.dataset, {Method::lof, 6, 0.01});
  std::vector<double> sorted = scores.scores;
  std::sort(sorted.begin(), sorted.end());
  const double q85 = sorted[static_cast<std::size_t>(0.85 * static_cast<double>(sorted.size() - 1))];
  std::size_t planted = 0, above = 0;
  for (std::size_t i = 0; i < scores.scores.size(); ++i) {
    if (!d.patch_outlier[i]) continue;
    ++planted;
    if (scores.scores[i] > q85) ++above;
  }
  EXPECT_GE(static_cast<double>(above), 0.95 * static_cast<double>(planted));
}

TEST(Benchmark, WritesLoadableManifests) {
  softpatch::testing::TempDir dir("bench");
  BenchmarkSpec spec;
  spec.synthetic.n_images = 12;
  spec.test_normal = 4;
  spec.test_anomalous = 3;
  const auto paths = write_benchmark(spec, dir.path());
  const auto train = read_manifest(paths.train_manifest);
  const auto test = read_manifest(paths.test_manifest);
  EXPECT_EQ(train.entries.size(), 12u);
  EXPECT_EQ(test.entries.size(), 7u);
  EXPECT_EQ(count_label(test, Label::anomalous), 3u);
  EXPECT_EQ(load_dataset(train).shape, (FeatureShape{32, 8, 8}));
  for (const auto& e : test.entries) {
    const auto mask = load_mask(e);
    const bool any = std::any_of(mask.pixels.begin(), mask.pixels.end(), [](auto p) { return p != 0; });
    EXPECT_EQ(any, e.label == Label::anomalous);
    EXPECT_EQ(mask.width, 64u);
  }
}

TEST(Sweep, SingleCellMatchesDirectRun) {
  softpatch::testing::TempDir dir("sweep");
  BenchmarkSpec spec;
  spec.synthetic.n_images = 20;
  spec.test_normal = 6;
  spec.test_anomalous = 4;
  const auto paths = write_benchmark(spec, dir.path());
  const auto train = read_manifest(paths.train_manifest), test = read_manifest(paths.test_manifest);

  SweepConfig cfg;
  cfg.ratios = {0.0};
  cfg.settings = {Setting::no_overlap};
  cfg.methods = {DiscriminatorConfig{}};
  cfg.repeats = 1;
  cfg.seed = 3;
  const auto sweep = run_sweep(train, test, cfg);
  ASSERT_EQ(sweep.cells.size(), 1u);

  FeatureCache cache;
  PipelineConfig pc;
  pc.denoise.seed = 3;
  const auto direct = train_and_evaluate(cache, train, test, pc);
  EXPECT_EQ(sweep.cells[0].image_auroc, direct.image_auroc);
  EXPECT_EQ(sweep.cells[0].pixel_auroc, direct.pixel_auroc);
  EXPECT_EQ(sweep.cells[0].seeds, std::vector<std::uint64_t>{3});

  const auto again = run_sweep(train, test, cfg);
  EXPECT_EQ(format_report(again.cells[0]), format_report(sweep.cells[0]));
}
