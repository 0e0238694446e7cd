#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "softpatch/feature_io.hpp"
#include "softpatch/inference.hpp"

namespace softpatch {

enum class Setting { no_overlap, overlap };

std::string_view to_string(Setting setting);
Setting parse_setting(std::string_view text);

/// Probability that a random positive outscores a random negative, ties counting one half.
/// labels are 0/1; both classes must be present.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// AUROC over every pixel of every map pooled into one ranking; nonzero mask pixels are positive.
double pixel_auroc(std::span<const ScoreGrid> maps, std::span<const GrayImage> masks);

struct CategoryScore {
  double image_auroc = 0.0;
  std::optional<double> pixel_auroc;
};

struct EvalReport {
  std::string method;
  double image_auroc = 0.0;
  std::optional<double> pixel_auroc;
  std::map<std::string, CategoryScore> per_category;
  double noise_ratio = 0.0;
  Setting setting = Setting::no_overlap;
  std::vector<std::uint64_t> seeds;
  std::string fingerprint;
};

/// Scores keyed by image id, plus optional pixel maps keyed the same way.
struct EvalInputs {
  std::map<std::string, double> image_scores;
  std::map<std::string, ScoreGrid> pixel_maps;
};

/// Per-category image AUROC (and pixel AUROC when every test image has a pixel map and at
/// least one mask exists). Overall values are the mean over categories. Entries flagged as
/// injected are skipped.
EvalReport evaluate(const EvalInputs& inputs, const DatasetManifest& test_manifest);

/// Averages reports of repeated runs of one sweep cell.
EvalReport average_reports(std::span<const EvalReport> runs);

/// key=value text, one field per line; categories as "category.<name>.image_auroc=...".
std::string format_report(const EvalReport& report);

struct TableColumn {
  std::string name;
  EvalReport report;
  std::optional<EvalReport> clean;  // same method at noise 0, for the Gap row
};

/// Category rows x method columns with Average and Gap rows.
std::string format_category_table(std::span<const TableColumn> columns, bool pixel);

/// Noise-ratio rows x method columns, one block per setting.
std::string format_trend_table(std::span<const EvalReport> reports, bool pixel);

}  // namespace softpatch
