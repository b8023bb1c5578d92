#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ppsam/geometry.hpp"
#include "ppsam/image.hpp"

namespace ppsam {

struct SampleRecord {
  std::string sample_id;
  std::filesystem::path image_path;
  std::filesystem::path mask_path;
  Dimensions original_size;

  bool operator==(const SampleRecord&) const = default;
};

enum class DatasetRole { Train, Test, UnseenTest };

std::string to_string(DatasetRole role);
DatasetRole dataset_role_from_string(const std::string& name);

/// Immutable after load. Records are sorted by sample_id and ids are unique.
struct DatasetManifest {
  std::string name;
  std::vector<SampleRecord> records;
  DatasetRole role = DatasetRole::Train;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

/// k-shot selection. k == kFullShot keeps the whole pool; k == 0 is zero-shot
/// (no training data at all).
struct FewShotSpec {
  static constexpr int kFullShot = -1;
  static constexpr int kZeroShot = 0;

  int k = kFullShot;
  std::uint64_t seed = 0;

  bool full() const { return k == kFullShot; }
  bool zero_shot() const { return k == kZeroShot; }
  bool operator==(const FewShotSpec&) const = default;
};

/// Shot counts the sampler accepts besides FULL and zero-shot.
inline constexpr int kAllowedShots[] = {1, 5, 10, 20, 50, 100};

void validate(const FewShotSpec& spec);
std::string shot_label(int k);

/// Scans `<root>/<name>/images` and `<root>/<name>/masks` and pairs files by stem.
/// Throws MissingPair listing every unmatched file, or EmptyDataset.
DatasetManifest load_manifest(const std::filesystem::path& root, const std::string& name,
                              DatasetRole role = DatasetRole::Train);

/// Partition by a JSON split file `{"train": [...], "test": [...]}`.
std::pair<DatasetManifest, DatasetManifest> split_train_test(const DatasetManifest& manifest,
                                                             const std::filesystem::path& split_file);

/// Same, with the id lists supplied directly.
std::pair<DatasetManifest, DatasetManifest> split_train_test(const DatasetManifest& manifest,
                                                             const std::vector<std::string>& train_ids,
                                                             const std::vector<std::string>& test_ids);

/// Uniform sample without replacement, deterministic in (manifest, k, seed).
/// FULL returns the input unchanged. Throws InsufficientData.
DatasetManifest sample_fewshot(const DatasetManifest& train, const FewShotSpec& spec);

/// Deterministically holds out round(fraction * |train|) records (at least one)
/// for checkpoint selection. Returns (remaining pool, validation).
std::pair<DatasetManifest, DatasetManifest> carve_validation(const DatasetManifest& train, double fraction,
                                                             std::uint64_t seed);

struct PreparedSample {
  ImageTensor image;
  BinaryMask mask;
  Dimensions original_size;
};

/// Image: bilinear resize to target then normalized. Mask: nearest-neighbour
/// resize then binarized at mask_threshold of its max intensity.
PreparedSample prepare_sample(const SampleRecord& record, Dimensions target, double mask_threshold,
                              const Normalization& norm);

/// Ground-truth mask at the original resolution (the only scoring resolution).
BinaryMask load_original_mask(const SampleRecord& record, double mask_threshold);

/// Bilinear resize of model-resolution probabilities to the original size,
/// thresholded at `threshold`.
BinaryMask restore_to_original(const ProbabilityMap& probabilities, Dimensions original_size,
                               double threshold = 0.5);

/// JSON-lines manifest cache, one record per line.
void write_manifest_cache(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest_cache(const std::filesystem::path& path, const std::string& name,
                                    DatasetRole role = DatasetRole::Train);

}  // namespace ppsam
