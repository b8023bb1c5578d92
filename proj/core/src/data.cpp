#include "ppsam/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "ppsam/error.hpp"

namespace ppsam {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_image_file(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp" || ext == ".tif" || ext == ".tiff";
}

std::map<std::string, fs::path> index_by_stem(const fs::path& dir, std::vector<std::string>& duplicates) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) return out;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    const auto stem = file.stem().string();
    if (!out.emplace(stem, file).second) duplicates.push_back(file.string());
  }
  return out;
}

DatasetManifest with_records(const DatasetManifest& like, std::vector<SampleRecord> records, DatasetRole role) {
  DatasetManifest out;
  out.name = like.name;
  out.role = role;
  out.records = std::move(records);
  std::sort(out.records.begin(), out.records.end(),
            [](const SampleRecord& a, const SampleRecord& b) { return a.sample_id < b.sample_id; });
  return out;
}

std::vector<std::string> read_id_list(const json& doc, const char* key, const fs::path& file) {
  if (!doc.contains(key) || !doc.at(key).is_array()) {
    throw Error(ErrorCode::ConfigError, "split file " + file.string() + " lacks array '" + key + "'");
  }
  std::vector<std::string> ids;
  for (const auto& v : doc.at(key)) {
    if (!v.is_string()) throw Error(ErrorCode::ConfigError, std::string("non-string id in '") + key + "'");
    ids.push_back(v.get<std::string>());
  }
  return ids;
}

}  // namespace

std::string to_string(DatasetRole role) {
  switch (role) {
    case DatasetRole::Train: return "train";
    case DatasetRole::Test: return "test";
    case DatasetRole::UnseenTest: return "unseen-test";
  }
  return "train";
}

DatasetRole dataset_role_from_string(const std::string& name) {
  if (name == "train") return DatasetRole::Train;
  if (name == "test") return DatasetRole::Test;
  if (name == "unseen-test") return DatasetRole::UnseenTest;
  throw Error(ErrorCode::ConfigError, "unknown dataset role '" + name + "'");
}

void validate(const FewShotSpec& spec) {
  if (spec.full() || spec.zero_shot()) return;
  if (std::find(std::begin(kAllowedShots), std::end(kAllowedShots), spec.k) == std::end(kAllowedShots)) {
    throw Error(ErrorCode::ConfigError,
                "k must be one of 0 (zero-shot), 1, 5, 10, 20, 50, 100 or full; got " + std::to_string(spec.k));
  }
}

std::string shot_label(int k) {
  if (k == FewShotSpec::kFullShot) return "full";
  if (k == FewShotSpec::kZeroShot) return "zero-shot";
  return std::to_string(k) + "-shot";
}

DatasetManifest load_manifest(const fs::path& root, const std::string& name, DatasetRole role) {
  const fs::path base = root / name;
  std::vector<std::string> duplicates;
  const auto images = index_by_stem(base / "images", duplicates);
  const auto masks = index_by_stem(base / "masks", duplicates);
  if (!duplicates.empty()) {
    std::string list;
    for (const auto& d : duplicates) list += " " + d;
    throw Error(ErrorCode::MissingPair, "ambiguous files sharing a stem:" + list);
  }

  std::vector<std::string> unmatched;
  for (const auto& [stem, path] : images) {
    if (!masks.contains(stem)) unmatched.push_back("image without mask: " + path.string());
  }
  for (const auto& [stem, path] : masks) {
    if (!images.contains(stem)) unmatched.push_back("mask without image: " + path.string());
  }
  if (!unmatched.empty()) {
    std::string list;
    for (const auto& u : unmatched) list += "\n  " + u;
    throw Error(ErrorCode::MissingPair, "dataset '" + name + "' has unmatched files:" + list);
  }
  if (images.empty()) throw Error(ErrorCode::EmptyDataset, "dataset '" + name + "' at " + base.string() + " is empty");

  DatasetManifest manifest;
  manifest.name = name;
  manifest.role = role;
  manifest.records.reserve(images.size());
  for (const auto& [stem, image_path] : images) {
    manifest.records.push_back({stem, image_path, masks.at(stem), probe_image_size(image_path)});
  }
  return manifest;
}

std::pair<DatasetManifest, DatasetManifest> split_train_test(const DatasetManifest& manifest,
                                                             const fs::path& split_file) {
  std::ifstream in(split_file);
  if (!in) throw Error(ErrorCode::Io, "cannot open split file " + split_file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, "split file " + split_file.string() + ": " + e.what());
  }
  return split_train_test(manifest, read_id_list(doc, "train", split_file), read_id_list(doc, "test", split_file));
}

std::pair<DatasetManifest, DatasetManifest> split_train_test(const DatasetManifest& manifest,
                                                             const std::vector<std::string>& train_ids,
                                                             const std::vector<std::string>& test_ids) {
  std::map<std::string, const SampleRecord*> by_id;
  for (const auto& r : manifest.records) by_id.emplace(r.sample_id, &r);

  std::set<std::string> train_set;
  std::set<std::string> test_set;
  auto collect = [&](const std::vector<std::string>& ids, std::set<std::string>& into) {
    for (const auto& id : ids) {
      if (!by_id.contains(id)) throw Error(ErrorCode::UnknownId, "split references unknown id '" + id + "'");
      into.insert(id);
    }
  };
  collect(train_ids, train_set);
  collect(test_ids, test_set);
  for (const auto& id : train_set) {
    if (test_set.contains(id)) throw Error(ErrorCode::OverlappingSplit, "id '" + id + "' is on both sides");
  }
  if (train_set.size() + test_set.size() != by_id.size()) {
    throw Error(ErrorCode::IncompleteSplit, std::to_string(by_id.size() - train_set.size() - test_set.size()) +
                                                " manifest ids are not assigned to either side");
  }
  if (train_set.empty()) throw Error(ErrorCode::EmptyDataset, "split leaves the train side empty");
  if (test_set.empty()) throw Error(ErrorCode::EmptyDataset, "split leaves the test side empty");

  std::vector<SampleRecord> train;
  std::vector<SampleRecord> test;
  for (const auto& r : manifest.records) (train_set.contains(r.sample_id) ? train : test).push_back(r);
  return {with_records(manifest, std::move(train), DatasetRole::Train),
          with_records(manifest, std::move(test), DatasetRole::Test)};
}

DatasetManifest sample_fewshot(const DatasetManifest& train, const FewShotSpec& spec) {
  validate(spec);
  if (spec.full()) return train;
  if (spec.zero_shot()) throw Error(ErrorCode::ConfigError, "zero-shot selects no training samples");
  if (static_cast<std::size_t>(spec.k) > train.size()) {
    throw Error(ErrorCode::InsufficientData, "k=" + std::to_string(spec.k) + " exceeds the " +
                                                 std::to_string(train.size()) + " available records");
  }
  std::mt19937_64 rng(spec.seed);
  std::vector<SampleRecord> picked;
  picked.reserve(static_cast<std::size_t>(spec.k));
  std::sample(train.records.begin(), train.records.end(), std::back_inserter(picked), spec.k, rng);
  return with_records(train, std::move(picked), train.role);
}

std::pair<DatasetManifest, DatasetManifest> carve_validation(const DatasetManifest& train, double fraction,
                                                             std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error(ErrorCode::ConfigError, "validation fraction must lie in (0, 1)");
  }
  if (train.size() < 2) throw Error(ErrorCode::InsufficientData, "need at least 2 records to carve validation");
  auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(train.size())));
  count = std::clamp<std::size_t>(count, 1, train.size() - 1);

  std::mt19937_64 rng(seed);
  std::vector<SampleRecord> held;
  std::sample(train.records.begin(), train.records.end(), std::back_inserter(held), count, rng);
  std::set<std::string> held_ids;
  for (const auto& r : held) held_ids.insert(r.sample_id);
  std::vector<SampleRecord> rest;
  for (const auto& r : train.records) {
    if (!held_ids.contains(r.sample_id)) rest.push_back(r);
  }
  return {with_records(train, std::move(rest), train.role), with_records(train, std::move(held), train.role)};
}

PreparedSample prepare_sample(const SampleRecord& record, Dimensions target, double mask_threshold,
                              const Normalization& norm) {
  const auto rgb = read_rgb(record.image_path);
  const auto gray = read_gray(record.mask_path);
  if (rgb.dims() != gray.dims()) {
    throw Error(ErrorCode::CorruptFile, "image and mask of '" + record.sample_id + "' differ in size");
  }
  // Binarize against the original peak so resizing cannot shift the cut.
  const auto full_mask = binarize(gray, mask_threshold);
  GrayImage bits{gray.height, gray.width, {full_mask.data().begin(), full_mask.data().end()}};
  const auto resized = resize_nearest(bits, target);

  PreparedSample out;
  out.image = to_tensor(resize_bilinear(rgb, target), norm);
  out.mask = BinaryMask(resized.height, resized.width, resized.data);
  out.original_size = rgb.dims();
  return out;
}

BinaryMask load_original_mask(const SampleRecord& record, double mask_threshold) {
  return binarize(read_gray(record.mask_path), mask_threshold);
}

BinaryMask restore_to_original(const ProbabilityMap& probabilities, Dimensions original_size, double threshold) {
  if (original_size.width < 1 || original_size.height < 1) {
    throw Error(ErrorCode::ShapeMismatch, "original size must be positive");
  }
  return threshold_map(resize_bilinear(probabilities, original_size), threshold);
}

void write_manifest_cache(const fs::path& path, const DatasetManifest& manifest) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& r : manifest.records) {
    json line = {{"sample_id", r.sample_id},
                 {"image_path", r.image_path.generic_string()},
                 {"mask_path", r.mask_path.generic_string()},
                 {"original_size", {r.original_size.width, r.original_size.height}}};
    out << line.dump() << '\n';
  }
}

DatasetManifest read_manifest_cache(const fs::path& path, const std::string& name, DatasetRole role) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open manifest cache " + path.string());
  std::vector<SampleRecord> records;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      SampleRecord r;
      r.sample_id = j.at("sample_id").get<std::string>();
      r.image_path = j.at("image_path").get<std::string>();
      r.mask_path = j.at("mask_path").get<std::string>();
      r.original_size = {j.at("original_size").at(0).get<int>(), j.at("original_size").at(1).get<int>()};
      if (!seen.insert(r.sample_id).second) {
        throw Error(ErrorCode::CorruptFile, "duplicate sample_id '" + r.sample_id + "'");
      }
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::CorruptFile, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  DatasetManifest like;
  like.name = name;
  return with_records(like, std::move(records), role);
}

}  // namespace ppsam
