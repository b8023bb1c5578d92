#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ppsam/data.hpp"
#include "ppsam/evaluate.hpp"
#include "ppsam/finetune.hpp"
#include "ppsam/metrics.hpp"
#include "ppsam/segmenter.hpp"

namespace ppsam {

/// 0, 5, 10, ..., 100.
std::vector<int> default_levels();

struct SweepSpec {
  std::vector<int> levels = default_levels();
  std::vector<std::string> test_sets;
  std::vector<std::uint64_t> runs{0, 1, 2, 3, 4};

  bool operator==(const SweepSpec&) const = default;
};

/// Levels strictly increasing and non-negative, runs non-empty and distinct.
void validate(const SweepSpec& spec);

struct RobustnessCurve {
  std::string model_id;
  std::string test_set;
  std::vector<CurvePoint> points;  // one per level, ascending
};

/// Seed of the k-shot draw for one run; a new subset is drawn per run seed.
std::uint64_t fewshot_seed_for_run(const RunConfig& config);
/// Model initialisation seed for one run.
std::uint64_t init_seed_for_run(std::uint64_t base_seed, std::uint64_t run_seed);

struct SweepOptions {
  TrainOptions train;
  EvaluateOptions evaluate;
  double mask_threshold = 0.5;
  /// Called with each fine-tuned model before evaluation (e.g. to save a checkpoint).
  std::function<void(const RunConfig&, Segmenter&, const TrainResult&)> on_trained;
  /// Called once per (run, test set) with the per-level DICE of that run.
  std::function<void(std::uint64_t run_seed, const std::string& test_set, const std::vector<double>& dice)> on_run;
};

/// Training inputs shared by every run of a sweep.
struct SweepData {
  DatasetManifest train_pool;
  DatasetManifest selection_set;  // checkpoint selection (validation or test)
  std::vector<DatasetManifest> test_sets;
};

/// One fine-tune (or zero-shot) per run config, evaluated at every level of
/// every test set, then aggregated across runs. `run_configs` must hold one
/// config per seed of `spec.runs`, identical except for run_seed.
std::vector<RobustnessCurve> run_sweep(const SweepSpec& spec, const std::vector<RunConfig>& run_configs,
                                       const SegmenterSpec& model, const std::string& model_id,
                                       const SweepData& data, const SweepOptions& options = {});

/// One config per run seed of `spec`, copied from `base`.
std::vector<RunConfig> expand_runs(const RunConfig& base, const SweepSpec& spec);

enum class ExperimentKind {
  FreezeAblation,
  TrainPerturbationAblation,
  FewshotCurve,
  Generalization,
  ScaleComparison,
  SotaComparison,
};

std::string to_string(ExperimentKind kind);
/// Throws UnknownKind.
ExperimentKind experiment_kind_from_string(const std::string& name);
inline constexpr ExperimentKind kAllExperimentKinds[] = {
    ExperimentKind::FreezeAblation, ExperimentKind::TrainPerturbationAblation, ExperimentKind::FewshotCurve,
    ExperimentKind::Generalization, ExperimentKind::ScaleComparison,           ExperimentKind::SotaComparison};

struct MatrixEntry {
  std::string label;  // series name in reports
  RunConfig run;
  SweepSpec sweep;
  std::optional<std::string> variant;  // overrides the model variant when set
};

/// Inputs a matrix is built from: the configured run and sweep, plus the
/// unseen test sets used by the generalization grid.
struct MatrixContext {
  RunConfig base_run;
  SweepSpec base_sweep;
  std::vector<std::string> unseen_test_sets;
};

std::vector<MatrixEntry> experiment_matrix(ExperimentKind kind, const MatrixContext& context);
/// String overload. Throws UnknownKind.
std::vector<MatrixEntry> experiment_matrix(const std::string& kind, const MatrixContext& context);

/// model_id,test_set,level_px,mean_dice,std_dice,run_count with two decimals.
void write_curves_csv(const std::filesystem::path& path, const std::vector<RobustnessCurve>& curves);
std::vector<RobustnessCurve> read_curves_csv(const std::filesystem::path& path);

}  // namespace ppsam
