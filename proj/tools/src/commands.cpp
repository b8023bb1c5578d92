#include "ppsam_cli/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ppsam/error.hpp"
#include "ppsam/finetune.hpp"
#include "ppsam/report.hpp"
#include "ppsam/sweep.hpp"
#include "ppsam/synthetic.hpp"

namespace ppsam::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void say(const CommandOptions& o, const std::string& line) {
  if (o.log) *o.log << line << std::endl;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

/// Returns the registered record when it is complete and reuse is allowed.
std::optional<ExperimentRecord> reusable(const ExperimentIndex& index, const std::string& id, bool force) {
  if (force) return std::nullopt;
  try {
    return index.require(id);
  } catch (const Error&) {
    return std::nullopt;
  }
}

SweepData sweep_data_for(const ResolvedData& data, const std::vector<std::string>& names) {
  SweepData out{data.pool, data.selection, {}};
  for (const auto& n : names) out.test_sets.push_back(data.tests.at(n));
  return out;
}

SegmenterSpec model_for(const ExperimentConfig& config, const std::optional<std::string>& variant) {
  auto spec = config.model;
  if (variant) spec.variant = *variant;
  return spec;
}

}  // namespace

ResolvedData resolve_data(const ExperimentConfig& config, const std::vector<std::string>& test_names,
                          bool need_train) {
  const auto& d = config.data;
  ResolvedData out;
  std::optional<DatasetManifest> split_test;
  if (!d.train_set.empty()) {
    out.train = load_manifest(d.data_root, d.train_set, DatasetRole::Train);
    if (d.split_file) {
      auto [train, test] = split_train_test(out.train, *d.split_file);
      out.train = std::move(train);
      test.name = split_test_name(d.train_set);
      test.role = DatasetRole::Test;
      split_test = std::move(test);
    }
  } else if (need_train) {
    throw Error(ErrorCode::ConfigError, "config key 'train_set' is required for this command");
  }

  const std::set<std::string> unseen(d.unseen_test_sets.begin(), d.unseen_test_sets.end());
  for (const auto& name : test_names) {
    if (out.tests.count(name)) continue;
    if (split_test && name == split_test->name) {
      out.tests.emplace(name, *split_test);
    } else {
      out.tests.emplace(name, load_manifest(d.data_root, name,
                                            unseen.count(name) ? DatasetRole::UnseenTest : DatasetRole::Test));
    }
  }

  if (!out.train.empty()) {
    if (d.selection_mode == SelectionMode::Validation) {
      auto [pool, validation] = carve_validation(out.train, d.validation_fraction, d.validation_seed);
      validation.name = d.train_set + "-val";
      out.pool = std::move(pool);
      out.selection = std::move(validation);
    } else {
      if (config.sweep.test_sets.empty()) {
        throw Error(ErrorCode::ConfigError, "selection_mode 'test' needs at least one entry in 'test_sets'");
      }
      const auto& first = config.sweep.test_sets.front();
      out.pool = out.train;
      out.selection = out.tests.count(first)
                          ? out.tests.at(first)
                          : (split_test && split_test->name == first
                                 ? *split_test
                                 : load_manifest(d.data_root, first, DatasetRole::Test));
    }
  }
  return out;
}

ExtractResult cmd_extract_bbox(const fs::path& data_root, const std::string& dataset, const fs::path& out_dir,
                               double mask_threshold) {
  const auto manifest = load_manifest(data_root, dataset);
  std::string boxes;
  std::string rejects;
  ExtractResult result;
  for (const auto& record : manifest.records) {
    const auto mask = load_original_mask(record, mask_threshold);
    if (mask.empty_foreground()) {
      rejects += json{{"sample_id", record.sample_id}, {"reason", to_string(ErrorCode::EmptyMask)}}.dump() + "\n";
      ++result.reject_count;
      continue;
    }
    const auto b = extract_bbox(mask);
    json line;
    line["sample_id"] = record.sample_id;
    line["bbox"] = {b.x_min, b.y_min, b.x_max, b.y_max};
    line["original_size"] = {mask.width(), mask.height()};
    boxes += line.dump() + "\n";
    ++result.box_count;
  }
  result.boxes = out_dir / (dataset + "_bboxes.jsonl");
  result.rejects = out_dir / (dataset + "_rejects.jsonl");
  write_text(result.boxes, boxes);
  write_text(result.rejects, rejects);
  return result;
}

std::vector<std::string> cmd_sample_fewshot(const ExperimentConfig& config, const fs::path& out_file) {
  if (config.run.fewshot.zero_shot()) throw Error(ErrorCode::ConfigError, "config key 'k': zero-shot has no sample");
  const auto data = resolve_data(config, {}, true);
  auto fs_spec = config.run.fewshot;
  fs_spec.seed = fewshot_seed_for_run(config.run);
  const auto sample = sample_fewshot(data.pool, fs_spec);
  std::vector<std::string> ids;
  for (const auto& r : sample.records) ids.push_back(r.sample_id);
  write_text(out_file, json(ids).dump(1) + "\n");
  return ids;
}

ExperimentRecord cmd_finetune(const ExperimentConfig& config, const CommandOptions& options) {
  if (config.run.fewshot.zero_shot()) {
    throw Error(ErrorCode::ConfigError, "config key 'k': zero-shot models are evaluated by 'sweep', not fine-tuned");
  }
  const ExperimentIndex index(options.out_root);
  const auto fp = fingerprint(config);
  const auto id = make_experiment_id("finetune", fp);
  if (auto existing = reusable(index, id, options.force)) {
    say(options, "reusing " + id);
    return *existing;
  }

  const auto data = resolve_data(config, {}, true);
  auto fs_spec = config.run.fewshot;
  fs_spec.seed = fewshot_seed_for_run(config.run);
  const auto subset = sample_fewshot(data.pool, fs_spec);

  auto spec = config.model;
  if (spec.backend == Backend::Surrogate) spec.seed = init_seed_for_run(config.model.seed, config.run.run_seed);
  auto model = make_segmenter(spec);

  TrainOptions train_options;
  train_options.mask_threshold = config.data.mask_threshold;
  train_options.prediction_threshold = config.data.prediction_threshold;
  train_options.run_config_fingerprint = fp;
  train_options.on_epoch = [&](const EpochRecord& e) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "epoch %d loss %.5f val_dice %.2f%s", e.epoch, e.mean_loss, e.val_dice,
                  e.is_best ? " *" : "");
    say(options, buf);
  };
  say(options, "fine-tuning " + std::to_string(subset.size()) + " samples from '" + data.train.name + "'");
  const auto result = train(*model, subset, config.run, data.selection, train_options);

  const fs::path rel = fs::path("experiments") / id;
  const fs::path dir = options.out_root / rel;
  fs::create_directories(dir);
  auto checkpoint = result.best;
  checkpoint.spec = config.model;  // the file records the configured spec, not the per-run init seed
  save_checkpoint(dir / "checkpoint.bin", checkpoint);
  write_training_log_csv(dir / "training_log.csv", result.log);
  write_text(dir / "config.json", canonical_json(config) + "\n");
  std::vector<std::string> ids;
  for (const auto& r : subset.records) ids.push_back(r.sample_id);
  write_text(dir / "samples.json", json(ids).dump(1) + "\n");

  ExperimentRecord record;
  record.experiment_id = id;
  record.command = "finetune";
  record.config_fingerprint = fp;
  record.created_at = utc_timestamp();
  record.artifacts = {{"checkpoint", rel / "checkpoint.bin"},
                      {"log", rel / "training_log.csv"},
                      {"config", rel / "config.json"},
                      {"samples", rel / "samples.json"}};
  index.append(record);
  say(options, "best epoch " + std::to_string(result.best.epoch) + ", registered " + id);
  return record;
}

ExperimentRecord cmd_sweep(const ExperimentConfig& config, const CommandOptions& options,
                           std::optional<std::string> matrix) {
  auto effective = config;
  if (matrix) {
    experiment_kind_from_string(*matrix);
    effective.matrix = matrix;
  }
  const ExperimentIndex index(options.out_root);
  const auto fp = fingerprint(effective);
  const auto id = make_experiment_id("sweep", fp);
  if (auto existing = reusable(index, id, options.force)) {
    say(options, "reusing " + id);
    return *existing;
  }

  struct Job {
    std::string label;
    RunConfig run;
    SweepSpec sweep;
    std::optional<std::string> variant;
  };
  std::vector<Job> jobs;
  if (effective.matrix) {
    const MatrixContext context{effective.run, effective.sweep, effective.data.unseen_test_sets};
    for (auto& e : experiment_matrix(*effective.matrix, context)) {
      jobs.push_back({e.label, e.run, e.sweep, e.variant});
    }
  } else {
    jobs.push_back({default_model_id(effective), effective.run, effective.sweep, std::nullopt});
  }

  std::vector<std::string> names;
  bool need_train = false;
  for (const auto& j : jobs) {
    if (j.sweep.test_sets.empty()) throw Error(ErrorCode::ConfigError, "config key 'test_sets' is empty");
    for (const auto& n : j.sweep.test_sets) {
      if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
    }
    need_train = need_train || !j.run.fewshot.zero_shot();
  }
  const auto data = resolve_data(effective, names, need_train);

  const fs::path rel = fs::path("experiments") / id;
  const fs::path dir = options.out_root / rel;
  fs::create_directories(dir);
  std::vector<RobustnessCurve> curves;
  std::string runs_csv = "model_id,test_set,run_seed,level_px,dice\n";
  for (const auto& job : jobs) {
    say(options, "sweep '" + job.label + "' over " + std::to_string(job.sweep.runs.size()) + " runs");
    SweepOptions so;
    so.mask_threshold = effective.data.mask_threshold;
    so.evaluate.prediction_threshold = effective.data.prediction_threshold;
    so.evaluate.workers = effective.workers;
    so.train.prediction_threshold = effective.data.prediction_threshold;
    so.train.run_config_fingerprint = fp;
    so.on_run = [&](std::uint64_t seed, const std::string& test_set, const std::vector<double>& dice) {
      for (std::size_t l = 0; l < dice.size(); ++l) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), ",%llu,%d,%.4f\n", static_cast<unsigned long long>(seed),
                      job.sweep.levels[l], dice[l]);
        runs_csv += job.label + "," + test_set + buf;
      }
      say(options, "  run " + std::to_string(seed) + " on '" + test_set + "' done");
    };
    auto produced = run_sweep(job.sweep, expand_runs(job.run, job.sweep), model_for(effective, job.variant),
                              job.label, sweep_data_for(data, job.sweep.test_sets), so);
    curves.insert(curves.end(), produced.begin(), produced.end());
  }

  const std::string kind = effective.matrix.value_or("");
  write_curves_csv(dir / "curves.csv", curves);
  write_text(dir / "runs.csv", runs_csv);
  write_text(dir / "config.json", canonical_json(effective) + "\n");
  write_svg_plot(dir / "curves.svg", kind.empty() ? "DICE vs prompt perturbation" : kind, curves);

  ExperimentRecord record;
  record.experiment_id = id;
  record.command = "sweep";
  record.kind = kind;
  record.config_fingerprint = fp;
  record.created_at = utc_timestamp();
  record.artifacts = {{"curves", rel / "curves.csv"},
                      {"runs", rel / "runs.csv"},
                      {"config", rel / "config.json"},
                      {"plot", rel / "curves.svg"}};
  index.append(record);
  say(options, "registered " + id);
  return record;
}

ReportResult cmd_report(const std::vector<std::string>& experiment_ids, std::optional<std::string> kind,
                        const fs::path& out_root, const fs::path& report_dir) {
  if (experiment_ids.empty()) throw Error(ErrorCode::MissingExperiment, "no experiments given");
  const ExperimentIndex index(out_root);
  std::vector<RobustnessCurve> curves;
  std::set<std::string> kinds;
  for (const auto& id : experiment_ids) {
    const auto record = index.require(id);
    const auto it = record.artifacts.find("curves");
    if (it == record.artifacts.end()) {
      throw Error(ErrorCode::MissingExperiment, "experiment '" + id + "' has no curves (run 'sweep' first)");
    }
    auto c = read_curves_csv(out_root / it->second);
    curves.insert(curves.end(), c.begin(), c.end());
    if (!record.kind.empty()) kinds.insert(record.kind);
  }
  if (!kind) {
    if (kinds.size() != 1) {
      throw Error(ErrorCode::ConfigError, "cannot infer the report kind; pass --kind");
    }
    kind = *kinds.begin();
  }
  experiment_kind_from_string(*kind);

  ReportResult result{*kind, {}};
  const auto csv = report_dir / (*kind + "_curves.csv");
  const auto svg = report_dir / (*kind + ".svg");
  write_curves_csv(csv, curves);
  write_svg_plot(svg, *kind, curves);
  result.files = {csv, svg};
  if (*kind == "sota-comparison") {
    const auto path = report_dir / "sota_comparison.csv";
    write_sota_csv(path, sota_rows(curves));
    result.files.push_back(path);
  }
  if (*kind == "fewshot-curve" || *kind == "generalization") {
    const auto path = report_dir / (*kind + "_annotations.csv");
    write_fewshot_csv(path, fewshot_annotations(curves));
    result.files.push_back(path);
  }
  return result;
}

namespace {

fs::path env_path(const char* name, const fs::path& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? fs::path(v) : fallback;
}

std::vector<std::string> split_commas(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::string cur;
    for (char ch : item) {
      if (ch == ',') {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prompt-perturbation fine-tuning and robustness sweeps for box-promptable segmenters", "ppsam"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir;
  bool force = false;
  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", config_path, "experiment config (JSON)");
    if (config_required) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output root (default $PPSAM_OUT or ./ppsam_out)");
    sub->add_flag("--force", force, "recompute even when a finished experiment matches");
  };

  auto* extract = app.add_subcommand("extract-bbox", "tight GT boxes of every sample as JSON lines");
  add_common(extract, false);
  std::string dataset;
  std::string data_root;
  double mask_threshold = 0.5;
  extract->add_option("--dataset", dataset, "dataset directory name (default: the config's train_set)");
  extract->add_option("--data-root", data_root, "dataset root (default $PPSAM_DATA or ./data)");
  extract->add_option("--mask-threshold", mask_threshold, "binarization threshold as a fraction of the mask max");

  auto* sample = app.add_subcommand("sample-fewshot", "draw the k-shot training subset");
  add_common(sample, true);

  auto* finetune = app.add_subcommand("finetune", "fine-tune with perturbed box prompts");
  add_common(finetune, true);

  auto* sweep = app.add_subcommand("sweep", "DICE vs. fixed prompt perturbation");
  add_common(sweep, true);
  std::string matrix;
  sweep->add_option("--matrix", matrix, "run the experiment grid of this kind");

  auto* report = app.add_subcommand("report", "combine experiment curves into CSV and SVG");
  add_common(report, false);
  std::vector<std::string> ids;
  std::string kind;
  report->add_option("--experiments", ids, "experiment ids (comma separated or repeated)")->required();
  report->add_option("--kind", kind, "report kind (default: the experiments' matrix kind)");

  auto* synth = app.add_subcommand("synth", "write a synthetic image/mask dataset");
  std::string synth_name;
  std::string synth_shape = "blob";
  int synth_count = 20;
  int synth_size = 256;
  std::uint64_t synth_seed = 0;
  int synth_empty = 0;
  synth->add_option("--name", synth_name, "dataset name")->required();
  synth->add_option("--data-root", data_root, "dataset root (default $PPSAM_DATA or ./data)");
  synth->add_option("--shape", synth_shape, "blob or rectangle");
  synth->add_option("--count", synth_count, "number of samples")->check(CLI::PositiveNumber);
  synth->add_option("--size", synth_size, "square image side in pixels")->check(CLI::Range(16, 4096));
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--empty", synth_empty, "trailing samples with empty masks")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ErrorCategory::Usage);
  }

  const fs::path default_data = env_path("PPSAM_DATA", "data");
  const fs::path out_root = out_dir.empty() ? env_path("PPSAM_OUT", "ppsam_out") : fs::path(out_dir);
  const CommandOptions options{out_root, force, &err};
  try {
    auto config = [&] { return load_config(config_path, default_data); };
    if (*extract) {
      fs::path root = data_root.empty() ? default_data : fs::path(data_root);
      std::string name = dataset;
      if (!config_path.empty()) {
        const auto c = config();
        if (data_root.empty()) root = c.data.data_root;
        if (name.empty()) name = c.data.train_set;
        mask_threshold = c.data.mask_threshold;
      }
      if (name.empty()) throw Error(ErrorCode::ConfigError, "extract-bbox needs --dataset or a config with train_set");
      const auto r = cmd_extract_bbox(root, name, out_root, mask_threshold);
      out << r.boxes.string() << " (" << r.box_count << " boxes, " << r.reject_count << " rejected)\n";
    } else if (*sample) {
      const auto c = config();
      const auto path = out_root / ("fewshot_" + c.data.train_set + "_" + shot_label(c.run.fewshot.k) + ".json");
      const auto picked = cmd_sample_fewshot(c, path);
      out << path.string() << " (" << picked.size() << " ids)\n";
    } else if (*finetune) {
      const auto r = cmd_finetune(config(), options);
      out << r.experiment_id << "\n";
    } else if (*sweep) {
      const auto r = cmd_sweep(config(), options, matrix.empty() ? std::nullopt : std::optional(matrix));
      out << r.experiment_id << "\n";
    } else if (*report) {
      const auto r = cmd_report(split_commas(ids), kind.empty() ? std::nullopt : std::optional(kind), out_root,
                                out_root / "reports");
      for (const auto& f : r.files) out << f.string() << "\n";
    } else if (*synth) {
      SyntheticOptions so;
      so.shape = synthetic_shape_from_string(synth_shape);
      so.count = synth_count;
      so.size = {synth_size, synth_size};
      so.seed = synth_seed;
      so.empty_masks = synth_empty;
      so.id_prefix = synth_name + "_";
      const fs::path root = data_root.empty() ? default_data : fs::path(data_root);
      const auto written = write_synthetic_dataset(root, synth_name, so);
      out << (root / synth_name).string() << " (" << written.size() << " samples)\n";
    }
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorCategory::Runtime);
  }
  return 0;
}

}  // namespace ppsam::cli
