#include "softpatch/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "softpatch/error.hpp"
#include "softpatch/fingerprint.hpp"

namespace softpatch {

namespace {

struct Scored {
  double score;
  bool positive;
};

// Sort once, then walk tie groups: each positive beats every negative below its group and
// half of the negatives inside it. Twice the win count is an integer, so the sum is exact.
double auroc_sorted(std::vector<Scored>& items) {
  std::sort(items.begin(), items.end(), [](const Scored& a, const Scored& b) { return a.score < b.score; });
  std::uint64_t positives = 0, negatives = 0, twice_wins = 0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    std::uint64_t pos_group = 0, neg_group = 0;
    while (j < items.size() && items[j].score == items[i].score) {
      (items[j].positive ? pos_group : neg_group) += 1;
      ++j;
    }
    twice_wins += 2 * pos_group * negatives + pos_group * neg_group;
    positives += pos_group;
    negatives += neg_group;
    i = j;
  }
  if (positives == 0 || negatives == 0) throw InputError("degenerate labels");
  return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string fmt_gap(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.3f", v);
  return buf;
}

}  // namespace

std::string_view to_string(Setting setting) { return setting == Setting::overlap ? "overlap" : "no_overlap"; }

Setting parse_setting(std::string_view text) {
  if (text == "overlap") return Setting::overlap;
  if (text == "no_overlap" || text == "no-overlap") return Setting::no_overlap;
  throw InputError("unknown setting '" + std::string(text) + "' (expected overlap|no_overlap)");
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw InputError("auroc: scores and labels differ in length");
  std::vector<Scored> items(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] > 1) throw InputError("auroc: labels must be 0 or 1");
    items[i] = {scores[i], labels[i] == 1};
  }
  return auroc_sorted(items);
}

double pixel_auroc(std::span<const ScoreGrid> maps, std::span<const GrayImage> masks) {
  if (maps.size() != masks.size()) throw InputError("pixel_auroc: map and mask counts differ");
  std::size_t total = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].height != masks[i].height || maps[i].width != masks[i].width)
      throw InputError("pixel_auroc: map " + std::to_string(i) + " does not match its mask size");
    total += maps[i].values.size();
  }
  std::vector<Scored> items;
  items.reserve(total);
  for (std::size_t i = 0; i < maps.size(); ++i)
    for (std::size_t p = 0; p < maps[i].values.size(); ++p) items.push_back({maps[i].values[p], masks[i].pixels[p] != 0});
  return auroc_sorted(items);
}

EvalReport evaluate(const EvalInputs& inputs, const DatasetManifest& test_manifest) {
  struct Bucket {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    std::vector<ScoreGrid> maps;
    std::vector<GrayImage> masks;
    bool has_mask = false;
    bool all_maps = true;
  };
  std::map<std::string, Bucket> buckets;
  for (const auto& entry : test_manifest.entries) {
    if (entry.injected) continue;
    const auto it = inputs.image_scores.find(entry.image_id);
    if (it == inputs.image_scores.end()) throw InputError("no score for test image '" + entry.image_id + "'");
    Bucket& b = buckets[entry.category];
    b.scores.push_back(it->second);
    b.labels.push_back(entry.label == Label::anomalous ? 1 : 0);
    b.has_mask = b.has_mask || entry.mask_path.has_value();
    const auto map_it = inputs.pixel_maps.find(entry.image_id);
    if (map_it == inputs.pixel_maps.end()) {
      b.all_maps = false;
    } else if (b.all_maps) {
      b.maps.push_back(map_it->second);
      b.masks.push_back(load_mask(entry));
    }
  }
  if (buckets.empty()) throw InputError("empty test set");

  EvalReport report;
  double image_sum = 0.0, pixel_sum = 0.0;
  bool pixel_everywhere = true;
  for (auto& [name, b] : buckets) {
    CategoryScore cs;
    cs.image_auroc = auroc(b.scores, b.labels);
    if (b.has_mask && b.all_maps) cs.pixel_auroc = pixel_auroc(b.maps, b.masks);
    image_sum += cs.image_auroc;
    if (cs.pixel_auroc) pixel_sum += *cs.pixel_auroc;
    else pixel_everywhere = false;
    report.per_category[name] = cs;
  }
  const auto categories = static_cast<double>(buckets.size());
  report.image_auroc = image_sum / categories;
  if (pixel_everywhere) report.pixel_auroc = pixel_sum / categories;
  return report;
}

EvalReport average_reports(std::span<const EvalReport> runs) {
  if (runs.empty()) throw InputError("average_reports: no runs");
  EvalReport out = runs.front();
  out.seeds.clear();
  const auto n = static_cast<double>(runs.size());
  out.image_auroc = 0.0;
  bool pixel = true;
  double pixel_sum = 0.0;
  for (auto& [name, cs] : out.per_category) cs = CategoryScore{0.0, cs.pixel_auroc ? std::optional<double>(0.0) : std::nullopt};
  for (const auto& r : runs) {
    out.image_auroc += r.image_auroc / n;
    if (r.pixel_auroc) pixel_sum += *r.pixel_auroc / n;
    else pixel = false;
    out.seeds.insert(out.seeds.end(), r.seeds.begin(), r.seeds.end());
    for (const auto& [name, cs] : r.per_category) {
      auto& acc = out.per_category[name];
      acc.image_auroc += cs.image_auroc / n;
      if (acc.pixel_auroc && cs.pixel_auroc) *acc.pixel_auroc += *cs.pixel_auroc / n;
      else acc.pixel_auroc.reset();
    }
  }
  out.pixel_auroc = pixel ? std::optional<double>(pixel_sum) : std::nullopt;
  return out;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  out << "method=" << report.method << '\n'
      << "setting=" << to_string(report.setting) << '\n'
      << "noise_ratio=" << format_real(report.noise_ratio) << '\n'
      << "image_auroc=" << format_real(report.image_auroc) << '\n';
  if (report.pixel_auroc) out << "pixel_auroc=" << format_real(*report.pixel_auroc) << '\n';
  out << "seeds=";
  for (std::size_t i = 0; i < report.seeds.size(); ++i) out << (i ? "," : "") << report.seeds[i];
  out << '\n';
  if (!report.fingerprint.empty()) out << "fingerprint=" << report.fingerprint << '\n';
  for (const auto& [name, cs] : report.per_category) {
    out << "category." << name << ".image_auroc=" << format_real(cs.image_auroc) << '\n';
    if (cs.pixel_auroc) out << "category." << name << ".pixel_auroc=" << format_real(*cs.pixel_auroc) << '\n';
  }
  return out.str();
}

std::string format_category_table(std::span<const TableColumn> columns, bool pixel) {
  auto value = [pixel](const CategoryScore& cs) -> std::optional<double> {
    return pixel ? cs.pixel_auroc : std::optional<double>(cs.image_auroc);
  };
  auto overall = [pixel](const EvalReport& r) -> std::optional<double> {
    return pixel ? r.pixel_auroc : std::optional<double>(r.image_auroc);
  };

  std::set<std::string> categories;
  for (const auto& col : columns)
    for (const auto& [name, cs] : col.report.per_category) categories.insert(name);

  std::size_t first = std::string("Category").size();
  for (const auto& c : categories) first = std::max(first, c.size());
  std::vector<std::size_t> widths;
  for (const auto& col : columns) widths.push_back(std::max<std::size_t>(col.name.size(), 6));

  std::ostringstream out;
  auto row = [&](const std::string& label, const std::vector<std::string>& cells) {
    out << std::left << std::setw(static_cast<int>(first)) << label;
    for (std::size_t i = 0; i < cells.size(); ++i) out << " | " << std::right << std::setw(static_cast<int>(widths[i])) << cells[i];
    out << '\n';
  };

  std::vector<std::string> header;
  for (const auto& col : columns) header.push_back(col.name);
  row("Category", header);
  out << std::string(first, '-');
  for (auto w : widths) out << "-+-" << std::string(w, '-');
  out << '\n';

  for (const auto& cat : categories) {
    std::vector<std::string> cells;
    for (const auto& col : columns) {
      const auto it = col.report.per_category.find(cat);
      const auto v = it == col.report.per_category.end() ? std::nullopt : value(it->second);
      cells.push_back(v ? fmt3(*v) : "-");
    }
    row(cat, cells);
  }

  std::vector<std::string> average, gap;
  bool any_gap = false;
  for (const auto& col : columns) {
    const auto v = overall(col.report);
    average.push_back(v ? fmt3(*v) : "-");
    const auto clean = col.clean ? overall(*col.clean) : std::nullopt;
    if (v && clean) {
      gap.push_back(fmt_gap(*v - *clean));
      any_gap = true;
    } else {
      gap.push_back("-");
    }
  }
  row("Average", average);
  if (any_gap) row("Gap", gap);
  return out.str();
}

std::string format_trend_table(std::span<const EvalReport> reports, bool pixel) {
  std::set<Setting> settings;
  std::vector<std::string> methods;
  std::set<double> ratios;
  for (const auto& r : reports) {
    settings.insert(r.setting);
    ratios.insert(r.noise_ratio);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  std::ostringstream out;
  for (Setting s : settings) {
    out << "[" << to_string(s) << "] " << (pixel ? "pixel" : "image") << " AUROC\n";
    out << std::left << std::setw(8) << "noise";
    for (const auto& m : methods) out << " | " << std::right << std::setw(std::max<int>(8, static_cast<int>(m.size()))) << m;
    out << '\n';
    for (double ratio : ratios) {
      out << std::left << std::setw(8) << fmt3(ratio);
      for (const auto& m : methods) {
        std::string cell = "-";
        for (const auto& r : reports) {
          if (r.setting != s || r.noise_ratio != ratio || r.method != m) continue;
          const auto v = pixel ? r.pixel_auroc : std::optional<double>(r.image_auroc);
          if (v) cell = fmt3(*v);
        }
        out << " | " << std::right << std::setw(std::max<int>(8, static_cast<int>(m.size()))) << cell;
      }
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace softpatch
