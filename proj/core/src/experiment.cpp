#include "ppsam/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include <fcntl.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "ppsam/error.hpp"

namespace ppsam {

using nlohmann::json;

std::string make_experiment_id(const std::string& command, const std::string& fingerprint) {
  return command + "-" + fingerprint.substr(0, 16);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string to_json_line(const ExperimentRecord& r) {
  json j;
  j["experiment_id"] = r.experiment_id;
  j["command"] = r.command;
  j["kind"] = r.kind;
  j["config_fingerprint"] = r.config_fingerprint;
  j["created_at"] = r.created_at;
  j["artifacts"] = json::object();
  for (const auto& [name, path] : r.artifacts) j["artifacts"][name] = path.generic_string();
  return j.dump();
}

ExperimentRecord record_from_json_line(const std::string& line) {
  try {
    const auto j = json::parse(line);
    ExperimentRecord r;
    r.experiment_id = j.at("experiment_id").get<std::string>();
    r.command = j.at("command").get<std::string>();
    r.kind = j.value("kind", "");
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    r.created_at = j.value("created_at", "");
    for (const auto& [name, path] : j.at("artifacts").items()) r.artifacts[name] = path.get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("bad experiment index line: ") + e.what());
  }
}

ExperimentIndex::ExperimentIndex(std::filesystem::path root) : root_(std::move(root)) {}

std::vector<ExperimentRecord> ExperimentIndex::records() const {
  std::vector<ExperimentRecord> out;
  std::ifstream in(index_path());
  if (!in) return out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(record_from_json_line(line));
  }
  return out;
}

std::optional<ExperimentRecord> ExperimentIndex::find(const std::string& id) const {
  std::optional<ExperimentRecord> found;
  for (auto& r : records()) {
    if (r.experiment_id == id) found = std::move(r);
  }
  return found;
}

ExperimentRecord ExperimentIndex::require(const std::string& id) const {
  auto r = find(id);
  if (!r) throw Error(ErrorCode::MissingExperiment, "no experiment '" + id + "' in " + index_path().string());
  for (const auto& [name, path] : r->artifacts) {
    if (!std::filesystem::exists(root_ / path)) {
      throw Error(ErrorCode::MissingExperiment,
                  "experiment '" + id + "' is incomplete: missing " + name + " (" + (root_ / path).string() + ")");
    }
  }
  return *r;
}

void ExperimentIndex::append(const ExperimentRecord& record) const {
  std::filesystem::create_directories(root_);
  const std::string line = to_json_line(record) + "\n";
  // O_APPEND keeps each record on its own line across processes.
  const int fd = ::open(index_path().c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw Error(ErrorCode::Io, "cannot open " + index_path().string());
  const auto written = ::write(fd, line.data(), line.size());
  ::close(fd);
  if (written != static_cast<ssize_t>(line.size())) throw Error(ErrorCode::Io, "short write to index");
}

}  // namespace ppsam
