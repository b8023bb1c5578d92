#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ppsam/config.hpp"
#include "ppsam/data.hpp"
#include "ppsam/experiment.hpp"

namespace ppsam::cli {

/// Datasets a config refers to, loaded and split.
struct ResolvedData {
  DatasetManifest train;       // full training split
  DatasetManifest pool;        // train minus the validation carve
  DatasetManifest selection;   // checkpoint selection set
  std::map<std::string, DatasetManifest> tests;  // by name
};

ResolvedData resolve_data(const ExperimentConfig& config, const std::vector<std::string>& test_names,
                          bool need_train);

struct ExtractResult {
  std::filesystem::path boxes;
  std::filesystem::path rejects;
  std::size_t box_count = 0;
  std::size_t reject_count = 0;
};

/// `<out>/<dataset>_bboxes.jsonl` and `<out>/<dataset>_rejects.jsonl`.
ExtractResult cmd_extract_bbox(const std::filesystem::path& data_root, const std::string& dataset,
                               const std::filesystem::path& out_dir, double mask_threshold = 0.5);

/// Writes the sampled ids as a JSON list and returns them.
std::vector<std::string> cmd_sample_fewshot(const ExperimentConfig& config, const std::filesystem::path& out_file);

struct CommandOptions {
  std::filesystem::path out_root = "ppsam_out";
  bool force = false;
  std::ostream* log = nullptr;  // progress lines; silent when null
};

/// Fine-tunes once per config and registers the experiment. An existing
/// complete experiment with the same fingerprint is reused unless forced.
ExperimentRecord cmd_finetune(const ExperimentConfig& config, const CommandOptions& options);

/// Robustness sweep for one config, or for every entry of the config's
/// experiment matrix when `matrix` (or the config's own) names a kind.
ExperimentRecord cmd_sweep(const ExperimentConfig& config, const CommandOptions& options,
                           std::optional<std::string> matrix = std::nullopt);

struct ReportResult {
  std::string kind;
  std::vector<std::filesystem::path> files;
};

/// Combines the curves of finished experiments into one CSV and plot per kind.
ReportResult cmd_report(const std::vector<std::string>& experiment_ids, std::optional<std::string> kind,
                        const std::filesystem::path& out_root, const std::filesystem::path& report_dir);

/// Full command line entry point. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ppsam::cli
