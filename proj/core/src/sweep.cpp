#include "ppsam/sweep.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ppsam/error.hpp"

namespace ppsam {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RunConfig without_seed(RunConfig c) {
  c.run_seed = 0;
  return c;
}

}  // namespace

std::vector<int> default_levels() {
  std::vector<int> levels;
  for (int p = 0; p <= 100; p += 5) levels.push_back(p);
  return levels;
}

void validate(const SweepSpec& spec) {
  if (spec.levels.empty()) throw Error(ErrorCode::ConfigError, "'levels' must not be empty");
  for (std::size_t i = 0; i < spec.levels.size(); ++i) {
    if (spec.levels[i] < 0) throw Error(ErrorCode::ConfigError, "'levels' must be non-negative");
    if (i > 0 && spec.levels[i] <= spec.levels[i - 1]) {
      throw Error(ErrorCode::ConfigError, "'levels' must be strictly increasing");
    }
  }
  if (spec.runs.empty()) throw Error(ErrorCode::ConfigError, "'runs' must not be empty");
  if (std::set<std::uint64_t>(spec.runs.begin(), spec.runs.end()).size() != spec.runs.size()) {
    throw Error(ErrorCode::ConfigError, "'runs' must not repeat a seed");
  }
}

std::uint64_t fewshot_seed_for_run(const RunConfig& config) {
  return splitmix64(config.fewshot.seed ^ splitmix64(config.run_seed));
}

std::uint64_t init_seed_for_run(std::uint64_t base_seed, std::uint64_t run_seed) {
  return splitmix64(base_seed + 0x51ed27ULL * splitmix64(run_seed));
}

std::vector<RunConfig> expand_runs(const RunConfig& base, const SweepSpec& spec) {
  std::vector<RunConfig> out;
  for (auto seed : spec.runs) {
    auto c = base;
    c.run_seed = seed;
    out.push_back(c);
  }
  return out;
}

std::vector<RobustnessCurve> run_sweep(const SweepSpec& spec, const std::vector<RunConfig>& run_configs,
                                       const SegmenterSpec& model_spec, const std::string& model_id,
                                       const SweepData& data, const SweepOptions& options) {
  validate(spec);
  if (run_configs.size() != spec.runs.size()) {
    throw Error(ErrorCode::ConfigError, "sweep has " + std::to_string(spec.runs.size()) + " run seeds but " +
                                            std::to_string(run_configs.size()) + " run configs");
  }
  for (std::size_t r = 0; r < run_configs.size(); ++r) {
    if (run_configs[r].run_seed != spec.runs[r]) {
      throw Error(ErrorCode::ConfigError, "run config " + std::to_string(r) + " does not match run seed " +
                                              std::to_string(spec.runs[r]));
    }
    if (!(without_seed(run_configs[r]) == without_seed(run_configs.front()))) {
      throw Error(ErrorCode::ConfigError, "run configs of one sweep may differ only in run_seed");
    }
  }
  if (data.test_sets.empty()) throw Error(ErrorCode::EmptyTestSet, "sweep has no test sets");

  // Test sets are prepared once; every run shares the resolution and normalization.
  const auto probe = make_segmenter(model_spec);
  std::vector<EvaluationSet> prepared;
  for (const auto& t : data.test_sets) {
    if (t.empty()) throw Error(ErrorCode::EmptyTestSet, "test set '" + t.name + "' is empty");
    prepared.push_back(EvaluationSet::prepare(t, probe->resolution(), probe->normalization(), options.mask_threshold));
  }

  // per_run[test][level][run]
  std::vector<std::vector<std::vector<double>>> per_run(
      prepared.size(), std::vector<std::vector<double>>(spec.levels.size()));
  for (const auto& config : run_configs) {
    auto spec_for_run = model_spec;
    if (spec_for_run.backend == Backend::Surrogate) {
      spec_for_run.seed = init_seed_for_run(model_spec.seed, config.run_seed);
    }
    auto model = make_segmenter(spec_for_run);
    if (!config.fewshot.zero_shot()) {
      auto fs = config.fewshot;
      fs.seed = fewshot_seed_for_run(config);
      const auto subset = sample_fewshot(data.train_pool, fs);
      auto train_options = options.train;
      train_options.mask_threshold = options.mask_threshold;
      auto result = train(*model, subset, config, data.selection_set, train_options);
      if (options.on_trained) options.on_trained(config, *model, result);
    }
    for (std::size_t t = 0; t < prepared.size(); ++t) {
      std::vector<double> run_values;
      for (std::size_t l = 0; l < spec.levels.size(); ++l) {
        const double v = evaluate_at_level(*model, prepared[t], spec.levels[l], options.evaluate).value;
        per_run[t][l].push_back(v);
        run_values.push_back(v);
      }
      if (options.on_run) options.on_run(config.run_seed, prepared[t].name, run_values);
    }
  }

  std::vector<RobustnessCurve> curves;
  for (std::size_t t = 0; t < prepared.size(); ++t) {
    RobustnessCurve curve{model_id, prepared[t].name, {}};
    for (std::size_t l = 0; l < spec.levels.size(); ++l) {
      curve.points.push_back(aggregate_runs(std::span<const double>(per_run[t][l]), spec.levels[l]));
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::FreezeAblation: return "freeze-ablation";
    case ExperimentKind::TrainPerturbationAblation: return "train-perturbation-ablation";
    case ExperimentKind::FewshotCurve: return "fewshot-curve";
    case ExperimentKind::Generalization: return "generalization";
    case ExperimentKind::ScaleComparison: return "scale-comparison";
    case ExperimentKind::SotaComparison: return "sota-comparison";
  }
  return "fewshot-curve";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  for (auto k : kAllExperimentKinds) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorCode::UnknownKind, "unknown experiment kind '" + name + "'");
}

std::vector<MatrixEntry> experiment_matrix(ExperimentKind kind, const MatrixContext& context) {
  std::vector<MatrixEntry> out;
  const auto& base = context.base_run;
  const auto& sweep = context.base_sweep;
  auto entry = [&](std::string label, RunConfig run, std::optional<SweepSpec> s = std::nullopt,
                   std::optional<std::string> variant = std::nullopt) {
    out.push_back({std::move(label), std::move(run), s ? *s : sweep, std::move(variant)});
  };
  auto with_k = [&](int k) {
    auto r = base;
    r.fewshot.k = k;
    return r;
  };
  const int fewshot_grid[] = {FewShotSpec::kZeroShot, 1, 5, 10, 20, 50, 100, FewShotSpec::kFullShot};

  switch (kind) {
    case ExperimentKind::FreezeAblation: {
      const FreezePolicy policies[] = {
          {true, true, false},   // mask decoder frozen (default)
          {false, true, true},   // image encoder frozen
          {false, true, false},  // image encoder and mask decoder frozen
          {true, true, true},    // everything trainable
      };
      for (const auto& f : policies) {
        auto r = base;
        r.freeze = f;
        entry("freeze-" + f.label(), r);
      }
      break;
    }
    case ExperimentKind::TrainPerturbationAblation: {
      for (int p : {0, 10, 20, 30, 40, 50}) {
        auto r = base;
        r.train_perturbation = p == 0 ? PerturbationPolicy::none() : PerturbationPolicy::fixed(p);
        entry("train-fixed-" + std::to_string(p), r);
      }
      auto r = base;
      r.train_perturbation = PerturbationPolicy::variable(50, base.train_perturbation.rng_seed);
      entry("train-variable-0-50", r);
      break;
    }
    case ExperimentKind::FewshotCurve:
      for (int k : fewshot_grid) entry(shot_label(k), with_k(k));
      break;
    case ExperimentKind::Generalization: {
      if (context.unseen_test_sets.empty()) {
        throw Error(ErrorCode::ConfigError, "'unseen_test_sets' is required for the generalization grid");
      }
      auto s = sweep;
      s.test_sets = context.unseen_test_sets;
      for (int k : fewshot_grid) entry(shot_label(k), with_k(k), s);
      break;
    }
    case ExperimentKind::ScaleComparison:
      for (const std::string variant : {"B", "L"}) {
        entry(variant + "-zero-shot", with_k(FewShotSpec::kZeroShot), std::nullopt, variant);
        entry(variant + "-full", with_k(FewShotSpec::kFullShot), std::nullopt, variant);
      }
      break;
    case ExperimentKind::SotaComparison: {
      auto s = sweep;
      s.levels = {25, 50};
      for (int k : {1, 5, 10}) entry(shot_label(k), with_k(k), s);
      break;
    }
  }
  return out;
}

std::vector<MatrixEntry> experiment_matrix(const std::string& kind, const MatrixContext& context) {
  return experiment_matrix(experiment_kind_from_string(kind), context);
}

void write_curves_csv(const std::filesystem::path& path, const std::vector<RobustnessCurve>& curves) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "model_id,test_set,level_px,mean_dice,std_dice,run_count\n";
  char buf[64];
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      std::snprintf(buf, sizeof(buf), ",%d,%.2f,%.2f,%d\n", p.perturbation_level, p.mean_dice, p.std_dice,
                    p.run_count);
      out << c.model_id << ',' << c.test_set << buf;
    }
  }
}

std::vector<RobustnessCurve> read_curves_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "model_id,test_set,level_px,mean_dice,std_dice,run_count") {
    throw Error(ErrorCode::CorruptFile, path.string() + " is not a curves file");
  }
  std::vector<RobustnessCurve> curves;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 6) throw Error(ErrorCode::CorruptFile, "bad curves row: " + line);
    const auto key = std::make_pair(cells[0], cells[1]);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, curves.size()).first;
      curves.push_back({cells[0], cells[1], {}});
    }
    try {
      curves[it->second].points.push_back(
          {std::stoi(cells[2]), std::stod(cells[3]), std::stod(cells[4]), std::stoi(cells[5])});
    } catch (const std::exception&) {
      throw Error(ErrorCode::CorruptFile, "bad curves row: " + line);
    }
  }
  return curves;
}

}  // namespace ppsam
