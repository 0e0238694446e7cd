#include "softpatch/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "softpatch/coreset.hpp"
#include "softpatch/discriminators.hpp"
#include "softpatch/error.hpp"
#include "softpatch/evaluation.hpp"
#include "softpatch/experiment.hpp"
#include "softpatch/feature_io.hpp"
#include "softpatch/fingerprint.hpp"
#include "softpatch/inference.hpp"
#include "softpatch/parallel.hpp"

namespace softpatch {

namespace fs = std::filesystem;

namespace {

// Flags shared by train and sweep; defaults follow the published settings.
struct ModelFlags {
  std::string method = "lof";
  std::size_t lof_k = 6;
  double epsilon = 0.01;
  double tau = 0.15;
  double ratio = 0.10;
  std::string sampler = "greedy";
  std::size_t projection_dim = 128;
  bool no_soft_weights = false;

  void attach(CLI::App& app) {
    app.add_option("--method", method, "Noise discriminator: none|nearest|gaussian|lof")->capture_default_str();
    app.add_option("--lof-k", lof_k, "LOF neighborhood size")->capture_default_str();
    app.add_option("--epsilon", epsilon, "Covariance regularizer for the Gaussian discriminator")->capture_default_str();
    app.add_option("--tau", tau, "Fraction of highest-scored patches removed before the coreset")->capture_default_str();
    app.add_option("--ratio", ratio, "Coreset sampling ratio")->capture_default_str();
    app.add_option("--sampler", sampler, "Coreset sampler: greedy|random")->capture_default_str();
    app.add_option("--projection-dim", projection_dim, "Random projection size for greedy distances (0 = off)")
        ->capture_default_str();
    app.add_flag("--no-soft-weights", no_soft_weights, "Store weight 1 for every bank entry");
  }

  DiscriminatorConfig discriminator() const {
    DiscriminatorConfig c;
    c.method = parse_method(method);
    c.lof_k = lof_k;
    c.epsilon = epsilon;
    return c;
  }

  DenoiseConfig denoise(std::uint64_t seed) const {
    DenoiseConfig c;
    c.tau = tau;
    c.sampler = parse_sampler(sampler);
    c.sampling_ratio = ratio;
    c.projection_dim = projection_dim == 0 ? std::nullopt : std::optional<std::size_t>(projection_dim);
    c.seed = seed;
    c.soft_weights = !no_soft_weights;
    return c;
  }
};

template <typename T>
std::vector<T> parse_list(const std::string& text, T (*parse)(std::string_view)) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(parse(item));
  if (out.empty()) throw InputError("empty list '" + text + "'");
  return out;
}

double parse_double(std::string_view text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(std::string(text), &used);
    if (used != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw InputError("invalid number '" + std::string(text) + "'");
  }
}

std::string sanitize(double v) {
  std::string s = format_real(v);
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

void echo_config(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& fields) {
  out << "# resolved config\n";
  for (const auto& [k, v] : fields) out << "#   " << k << "=" << v << '\n';
}

void echo_canonical(std::ostream& out, const std::string& canonical) {
  std::istringstream lines(canonical);
  std::string line;
  while (std::getline(lines, line)) out << "#   " << line << '\n';
}

int cmd_train(const std::string& manifest_path, const std::string& out_path, const std::string& scores_path,
              const ModelFlags& flags, std::uint64_t seed, std::ostream& out) {
  const DiscriminatorConfig disc = flags.discriminator();
  const DenoiseConfig denoise = flags.denoise(seed);
  echo_config(out, {{"command", "train"}, {"manifest", manifest_path}, {"out", out_path},
                    {"threads", std::to_string(thread_count())}});
  echo_canonical(out, canonical_config(disc, denoise));

  const DatasetManifest manifest = read_manifest(manifest_path);
  const FeatureDataset dataset = load_dataset(manifest);
  const ScoreTensor scores = score_all(dataset, disc);
  if (!scores_path.empty()) write_score_file(scores, scores_path);
  BuildStats stats;
  const MemoryBank bank = build_bank(dataset, scores, denoise, disc, &stats);
  write_bank(bank, out_path);

  out << "images=" << dataset.size() << " shape=" << to_string(dataset.shape) << '\n'
      << "patches=" << stats.total_patches << " retained=" << stats.retained_patches
      << " removed=" << stats.total_patches - stats.retained_patches << " bank=" << stats.bank_size << '\n'
      << "weights min=" << format_real(stats.weight_min) << " mean=" << format_real(stats.weight_mean)
      << " max=" << format_real(stats.weight_max) << '\n'
      << "fingerprint=" << to_hex(bank.config_fingerprint) << '\n';
  return 0;
}

int cmd_infer(const std::string& bank_path, const std::string& manifest_path, const std::string& out_path,
              const std::string& maps_dir, bool pgm, double sigma, std::ostream& out) {
  echo_config(out, {{"command", "infer"}, {"bank", bank_path}, {"manifest", manifest_path}, {"out", out_path},
                    {"maps_dir", maps_dir}, {"sigma", format_real(sigma)}, {"pgm", pgm ? "1" : "0"},
                    {"threads", std::to_string(thread_count())}});
  const MemoryBank bank = read_bank(bank_path);
  const DatasetManifest manifest = read_manifest(manifest_path);
  const FeatureDataset dataset = load_dataset(manifest);
  if (dataset.shape.channels != bank.dim)
    throw InputError("dimension mismatch: bank has " + std::to_string(bank.dim) + " channels, features have " +
                     std::to_string(dataset.shape.channels));
  if (!maps_dir.empty()) fs::create_directories(maps_dir);

  ResultsFile results;
  results.fingerprint = to_hex(bank.config_fingerprint);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    AnomalyResult r = score_image(bank, dataset.maps[i]);
    results.scores.push_back({r.image_id, r.image_score});
    if (maps_dir.empty()) continue;
    const auto& e = manifest.entries[i];
    r = anomaly_map(std::move(r), e.image_height, e.image_width, sigma);
    FeatureMap pixel;
    pixel.image_id = r.image_id;
    pixel.shape = {1, e.image_height, e.image_width};
    pixel.data.assign(r.pixel_map.values.begin(), r.pixel_map.values.end());
    write_feature_file(pixel, fs::path(maps_dir) / (r.image_id + ".spf"));
    if (pgm) {
      const double scale = *std::max_element(r.pixel_map.values.begin(), r.pixel_map.values.end());
      write_pgm16(r.pixel_map.values, e.image_width, e.image_height, scale, fs::path(maps_dir) / (r.image_id + ".pgm"));
    }
  }
  write_results(results, out_path);
  out << "scored=" << results.scores.size() << " fingerprint=" << results.fingerprint << '\n';
  return 0;
}

int cmd_eval(const std::string& results_path, const std::string& manifest_path, const std::string& maps_dir,
             const std::string& out_path, double noise_ratio, const std::string& setting, const std::string& method,
             std::ostream& out) {
  echo_config(out, {{"command", "eval"}, {"results", results_path}, {"manifest", manifest_path},
                    {"maps_dir", maps_dir}, {"out", out_path}});
  const ResultsFile results = read_results(results_path);
  const DatasetManifest manifest = read_manifest(manifest_path);
  validate_manifest(manifest);
  EvalInputs inputs;
  for (const auto& s : results.scores) inputs.image_scores[s.image_id] = s.score;
  if (!maps_dir.empty()) {
    for (const auto& e : manifest.entries) {
      const fs::path p = fs::path(maps_dir) / (e.image_id + ".spf");
      if (!fs::exists(p)) continue;
      const FeatureMap m = read_feature_file(p);
      if (m.shape.channels != 1) throw FormatError("pixel map '" + p.string() + "' must have one channel");
      ScoreGrid grid{m.shape.height, m.shape.width, std::vector<double>(m.data.begin(), m.data.end())};
      inputs.pixel_maps.emplace(e.image_id, std::move(grid));
    }
  }
  EvalReport report = evaluate(inputs, manifest);
  report.method = method;
  report.noise_ratio = noise_ratio;
  report.setting = parse_setting(setting);
  report.fingerprint = results.fingerprint;
  const std::string text = format_report(report);
  if (!out_path.empty()) {
    std::ofstream f(out_path, std::ios::trunc);
    if (!f) throw InputError("cannot open for writing: " + out_path);
    f << text;
  }
  out << text;
  const TableColumn column{method, report, std::nullopt};
  out << format_category_table(std::span(&column, 1), false);
  return 0;
}

int cmd_sweep(const std::string& train_path, const std::string& test_path, const std::string& out_dir,
              const std::string& ratios, const std::string& settings, const std::string& methods, std::size_t repeats,
              double sigma, bool no_pixel, const ModelFlags& flags, std::uint64_t seed, std::ostream& out) {
  SweepConfig config;
  config.ratios = parse_list<double>(ratios, parse_double);
  config.settings = parse_list<Setting>(settings, parse_setting);
  for (Method m : parse_list<Method>(methods, parse_method)) {
    DiscriminatorConfig d = flags.discriminator();
    d.method = m;
    config.methods.push_back(d);
  }
  config.denoise = flags.denoise(seed);
  config.sigma = sigma;
  config.pixel_maps = !no_pixel;
  config.repeats = repeats;
  config.seed = seed;
  echo_config(out, {{"command", "sweep"}, {"train", train_path}, {"test", test_path}, {"out_dir", out_dir},
                    {"ratios", ratios}, {"settings", settings}, {"methods", methods},
                    {"repeats", std::to_string(repeats)}, {"sigma", format_real(sigma)},
                    {"seed", std::to_string(seed)}, {"threads", std::to_string(thread_count())}});
  echo_canonical(out, canonical_config(flags.discriminator(), config.denoise));

  const DatasetManifest train = read_manifest(train_path);
  const DatasetManifest test = read_manifest(test_path);
  const SweepResult result = run_sweep(train, test, config);

  fs::create_directories(out_dir);
  for (const auto& cell : result.cells) {
    const std::string name = "cell_" + std::string(to_string(cell.setting)) + "_" + sanitize(cell.noise_ratio) + "_" +
                             cell.method + ".txt";
    std::ofstream f(fs::path(out_dir) / name, std::ios::trunc);
    f << format_report(cell);
  }
  for (const auto& run : result.runs) {
    const std::string name = "run_" + std::string(to_string(run.setting)) + "_" + sanitize(run.noise_ratio) + "_" +
                             run.method + "_seed" + std::to_string(run.seed) + ".txt";
    std::ofstream f(fs::path(out_dir) / name, std::ios::trunc);
    f << format_report(run.report);
  }

  std::ostringstream table;
  table << format_trend_table(result.cells, false);
  const bool pixel = std::all_of(result.cells.begin(), result.cells.end(),
                                 [](const auto& c) { return c.pixel_auroc.has_value(); });
  if (pixel) table << format_trend_table(result.cells, true);
  for (Setting s : config.settings) {
    for (double ratio : config.ratios) {
      if (ratio == 0.0) continue;
      std::vector<TableColumn> columns;
      for (const auto& cell : result.cells) {
        if (cell.setting != s || cell.noise_ratio != ratio) continue;
        TableColumn col{cell.method, cell, std::nullopt};
        for (const auto& clean : result.cells)
          if (clean.setting == s && clean.noise_ratio == 0.0 && clean.method == cell.method) col.clean = clean;
        columns.push_back(std::move(col));
      }
      table << "\nnoise=" << format_real(ratio) << " [" << to_string(s) << "] image AUROC\n"
            << format_category_table(columns, false);
    }
  }
  std::ofstream(fs::path(out_dir) / "sweep_table.txt", std::ios::trunc) << table.str();
  out << table.str();
  return 0;
}

int cmd_inject(const std::string& train_path, const std::string& test_path, const std::string& out_train,
               const std::string& out_test, double ratio, const std::string& setting, std::uint64_t seed,
               std::ostream& out) {
  echo_config(out, {{"command", "inject"}, {"train", train_path}, {"test", test_path}, {"out_train", out_train},
                    {"out_test", out_test}, {"noise_ratio", format_real(ratio)}, {"setting", setting},
                    {"seed", std::to_string(seed)}});
  const DatasetManifest train = read_manifest(train_path);
  const DatasetManifest test = read_manifest(test_path);
  const InjectedManifests result = inject_noise(train, test, {ratio, parse_setting(setting), seed});
  write_manifest(result.train, out_train);
  write_manifest(result.test, out_test);
  out << "train=" << result.train.entries.size() << " test=" << result.test.entries.size()
      << " injected=" << result.train.entries.size() - train.entries.size() << '\n';
  return 0;
}

int cmd_gen_synthetic(const std::string& out_dir, const BenchmarkSpec& spec, bool planted, std::ostream& out) {
  const auto& s = spec.synthetic;
  echo_config(out, {{"command", "gen-synthetic"}, {"out_dir", out_dir}, {"images", std::to_string(s.n_images)},
                    {"height", std::to_string(s.height)}, {"width", std::to_string(s.width)},
                    {"channels", std::to_string(s.channels)}, {"fraction", format_real(s.outlier_fraction)},
                    {"shift", format_real(s.outlier_shift)}, {"std", format_real(s.cluster_std)},
                    {"mean_scale", format_real(s.mean_scale)}, {"test_normal", std::to_string(spec.test_normal)},
                    {"test_anomalous", std::to_string(spec.test_anomalous)},
                    {"stride", std::to_string(spec.patch_stride)}, {"seed", std::to_string(s.seed)},
                    {"planted", planted ? "1" : "0"}});
  if (!planted) {
    const BenchmarkPaths paths = write_benchmark(spec, out_dir);
    out << "train_manifest=" << paths.train_manifest.string() << '\n'
        << "test_manifest=" << paths.test_manifest.string() << '\n';
    return 0;
  }
  // Single training set with planted outlier maps, flagged injected=1 for auditing.
  const SyntheticData data = generate_synthetic(s);
  fs::create_directories(fs::path(out_dir) / "features");
  DatasetManifest manifest;
  for (std::size_t i = 0; i < data.dataset.size(); ++i) {
    const auto& map = data.dataset.maps[i];
    ManifestEntry e;
    e.feature_path = fs::absolute(fs::path(out_dir) / "features" / (map.image_id + ".spf")).lexically_normal();
    e.image_id = map.image_id;
    e.label = data.image_outlier[i] ? Label::anomalous : Label::normal;
    e.injected = data.image_outlier[i] != 0;
    e.image_height = s.height * spec.patch_stride;
    e.image_width = s.width * spec.patch_stride;
    e.category = spec.category;
    write_feature_file(map, e.feature_path);
    manifest.entries.push_back(std::move(e));
  }
  const fs::path manifest_path = fs::path(out_dir) / "planted.txt";
  write_manifest(manifest, manifest_path);
  out << "manifest=" << manifest_path.string() << '\n';
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Noise-robust patch-memory anomaly detection"};
  app.require_subcommand(1);
  std::size_t threads = 0;
  std::uint64_t seed = 0;
  app.add_option("--threads", threads, "Worker thread cap (0 = all cores)");

  ModelFlags model;
  std::string manifest, bank_out, scores_out;
  auto* train = app.add_subcommand("train", "Score training patches, denoise and build a memory bank");
  train->add_option("--manifest", manifest, "Training manifest")->required();
  train->add_option("--out", bank_out, "Output bank file (SPB1)")->required();
  train->add_option("--scores-out", scores_out, "Optional SPS1 export of the outlier scores");
  train->add_option("--seed", seed, "Random seed")->capture_default_str();
  train->add_option("--threads", threads, "Worker thread cap (0 = all cores)");
  model.attach(*train);

  std::string bank_in, results_out, maps_dir;
  double sigma = 4.0;
  bool pgm = false;
  auto* infer = app.add_subcommand("infer", "Score a manifest against a memory bank");
  infer->add_option("--bank", bank_in, "Bank file (SPB1)")->required();
  infer->add_option("--manifest", manifest, "Manifest of images to score")->required();
  infer->add_option("--out", results_out, "Output results file")->required();
  infer->add_option("--maps-dir", maps_dir, "Write per-image pixel maps (SPF1) here");
  infer->add_flag("--pgm", pgm, "Also write 16-bit PGM pixel maps");
  infer->add_option("--sigma", sigma, "Gaussian smoothing std of pixel maps")->capture_default_str();
  infer->add_option("--seed", seed, "Random seed (inference is deterministic; echoed only)");
  infer->add_option("--threads", threads, "Worker thread cap (0 = all cores)");

  std::string results_in, report_out, setting = "no_overlap", method_label = "softpatch";
  double noise_ratio = 0.0;
  auto* eval = app.add_subcommand("eval", "Compute image/pixel AUROC for a results file");
  eval->add_option("--results", results_in, "Results file from infer")->required();
  eval->add_option("--manifest", manifest, "Test manifest with labels and masks")->required();
  eval->add_option("--maps-dir", maps_dir, "Pixel maps written by infer");
  eval->add_option("--out", report_out, "Report file");
  eval->add_option("--noise-ratio", noise_ratio, "Noise ratio label for the report");
  eval->add_option("--setting", setting, "Setting label: no_overlap|overlap");
  eval->add_option("--label", method_label, "Method label for the report");
  eval->add_option("--seed", seed, "Random seed (echoed only)");

  std::string train_manifest, test_manifest, out_dir, ratios = "0,0.05,0.1,0.15", settings = "no_overlap,overlap",
                                                      methods = "none,nearest,gaussian,lof";
  std::size_t repeats = 3;
  bool no_pixel = false;
  ModelFlags sweep_model;
  auto* sweep = app.add_subcommand("sweep", "Noise-ratio x setting x method sweep");
  sweep->add_option("--train", train_manifest, "Clean training manifest")->required();
  sweep->add_option("--test", test_manifest, "Test manifest")->required();
  sweep->add_option("--out-dir", out_dir, "Directory for per-cell reports")->required();
  sweep->add_option("--ratios", ratios, "Comma-separated noise ratios")->capture_default_str();
  sweep->add_option("--settings", settings, "Comma-separated settings")->capture_default_str();
  sweep->add_option("--methods", methods, "Comma-separated methods")->capture_default_str();
  sweep->add_option("--repeats", repeats, "Runs per cell (seed, seed+1, ...)")->capture_default_str();
  sweep->add_option("--sigma", sigma, "Gaussian smoothing std of pixel maps")->capture_default_str();
  sweep->add_flag("--no-pixel", no_pixel, "Skip pixel-level AUROC");
  sweep->add_option("--seed", seed, "Base seed")->capture_default_str();
  sweep->add_option("--threads", threads, "Worker thread cap (0 = all cores)");
  sweep_model.attach(*sweep);

  std::string out_train, out_test;
  auto* inject = app.add_subcommand("inject", "Inject anomalous test images into a training manifest");
  inject->add_option("--train", train_manifest, "Clean training manifest")->required();
  inject->add_option("--test", test_manifest, "Test manifest")->required();
  inject->add_option("--noise-ratio", noise_ratio, "Injected fraction of the clean training size")->required();
  inject->add_option("--setting", setting, "no_overlap|overlap")->capture_default_str();
  inject->add_option("--out-train", out_train, "Output training manifest")->required();
  inject->add_option("--out-test", out_test, "Output test manifest")->required();
  inject->add_option("--seed", seed, "Random seed")->capture_default_str();

  BenchmarkSpec bench;
  bool planted = false;
  std::uint64_t gen_seed = 7;
  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic feature benchmark");
  gen->add_option("--out-dir", out_dir, "Output directory")->required();
  gen->add_option("--images", bench.synthetic.n_images, "Training images")->capture_default_str();
  gen->add_option("--height", bench.synthetic.height, "Patch grid height")->capture_default_str();
  gen->add_option("--width", bench.synthetic.width, "Patch grid width")->capture_default_str();
  gen->add_option("--channels", bench.synthetic.channels, "Feature channels")->capture_default_str();
  gen->add_option("--fraction", bench.synthetic.outlier_fraction, "Outlier image fraction (--planted)")
      ->capture_default_str();
  gen->add_option("--shift", bench.synthetic.outlier_shift, "Defect shift in cluster stds")->capture_default_str();
  gen->add_option("--std", bench.synthetic.cluster_std, "Cluster std")->capture_default_str();
  gen->add_option("--mean-scale", bench.synthetic.mean_scale, "Spread of cluster centers")->capture_default_str();
  gen->add_option("--test-normal", bench.test_normal, "Clean test images")->capture_default_str();
  gen->add_option("--test-anomalous", bench.test_anomalous, "Defective test images")->capture_default_str();
  gen->add_option("--stride", bench.patch_stride, "Pixels per patch cell")->capture_default_str();
  gen->add_option("--category", bench.category, "Category name")->capture_default_str();
  gen->add_flag("--planted", planted, "Write one training set with planted outlier maps instead");
  gen->add_option("--seed", gen_seed, "Random seed")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return static_cast<int>(ErrorKind::input);
  }

  set_thread_count(threads);

  try {
    if (train->parsed()) return cmd_train(manifest, bank_out, scores_out, model, seed, out);
    if (infer->parsed()) return cmd_infer(bank_in, manifest, results_out, maps_dir, pgm, sigma, out);
    if (eval->parsed())
      return cmd_eval(results_in, manifest, maps_dir, report_out, noise_ratio, setting, method_label, out);
    if (sweep->parsed())
      return cmd_sweep(train_manifest, test_manifest, out_dir, ratios, settings, methods, repeats, sigma, no_pixel,
                       sweep_model, seed, out);
    if (inject->parsed())
      return cmd_inject(train_manifest, test_manifest, out_train, out_test, noise_ratio, setting, seed, out);
    if (gen->parsed()) {
      bench.synthetic.seed = gen_seed;
      return cmd_gen_synthetic(out_dir, bench, planted, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace softpatch
