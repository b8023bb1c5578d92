#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ppsam/finetune.hpp"
#include "ppsam/segmenter.hpp"
#include "ppsam/sweep.hpp"

namespace ppsam {

/// Where datasets come from and how they are split.
struct DataConfig {
  std::filesystem::path data_root = "data";
  std::string train_set;                       // dataset directory under data_root
  std::optional<std::filesystem::path> split_file;  // splits train_set into train/test when set
  std::vector<std::string> unseen_test_sets;
  SelectionMode selection_mode = SelectionMode::Validation;
  double validation_fraction = 0.1;
  std::uint64_t validation_seed = 0;
  double mask_threshold = 0.5;
  double prediction_threshold = 0.5;

  bool operator==(const DataConfig&) const = default;
};

/// Everything one experiment run needs. Parsed from a flat JSON object.
struct ExperimentConfig {
  SegmenterSpec model;
  DataConfig data;
  RunConfig run;
  SweepSpec sweep;
  std::optional<std::string> matrix;  // experiment kind for grid sweeps
  std::string model_id;               // series label; derived from k when empty
  int workers = 1;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Name of the held-out part of `train_set` when a split file is used.
std::string split_test_name(const std::string& train_set);

/// Parses and validates. Unknown keys and bad values throw ConfigError naming the key.
/// `data_root` falls back to `default_data_root` when the key is absent.
ExperimentConfig parse_config(const std::string& json_text,
                              const std::filesystem::path& default_data_root = "data");
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::filesystem::path& default_data_root = "data");

/// Fully resolved JSON (every key, defaults filled in), keys sorted, no whitespace.
std::string canonical_json(const ExperimentConfig& config);
/// Hex SHA-256 of canonical_json; stable under key order and formatting.
std::string fingerprint(const ExperimentConfig& config);
std::string sha256_hex(const std::string& bytes);

/// The model spec a config resolves to after variant overrides.
std::string default_model_id(const ExperimentConfig& config);

}  // namespace ppsam
