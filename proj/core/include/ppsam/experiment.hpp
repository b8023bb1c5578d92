#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ppsam {

struct ExperimentRecord {
  std::string experiment_id;
  std::string command;  // finetune | sweep
  std::string kind;     // experiment matrix kind, empty for single configs
  std::string config_fingerprint;
  std::map<std::string, std::filesystem::path> artifacts;  // relative to the output root
  std::string created_at;                                  // UTC, ISO 8601

  bool operator==(const ExperimentRecord&) const = default;
};

/// `<command>-<first 16 hex digits of the fingerprint>`.
std::string make_experiment_id(const std::string& command, const std::string& fingerprint);
std::string utc_timestamp();

/// JSON-lines experiment index at `<root>/index.jsonl`. Later lines for the
/// same id supersede earlier ones.
class ExperimentIndex {
 public:
  explicit ExperimentIndex(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path index_path() const { return root_ / "index.jsonl"; }
  std::filesystem::path experiment_dir(const std::string& id) const { return root_ / "experiments" / id; }

  std::vector<ExperimentRecord> records() const;
  std::optional<ExperimentRecord> find(const std::string& id) const;
  /// Throws MissingExperiment when absent or when an artifact file is missing.
  ExperimentRecord require(const std::string& id) const;
  /// One line, written with a single append.
  void append(const ExperimentRecord& record) const;

 private:
  std::filesystem::path root_;
};

std::string to_json_line(const ExperimentRecord& record);
ExperimentRecord record_from_json_line(const std::string& line);

}  // namespace ppsam
