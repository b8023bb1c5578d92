#pragma once

#include <string>
#include <vector>

#include "ppsam/data.hpp"
#include "ppsam/metrics.hpp"
#include "ppsam/segmenter.hpp"

namespace ppsam {

/// A test sample ready for repeated scoring at different perturbation levels.
struct EvaluationSample {
  std::string sample_id;
  ImageTensor image;             // at model resolution
  BoundingBox prompt;            // tight GT box, rescaled to model resolution
  BinaryMask original_mask;      // scoring target
};

/// Prepared once per (manifest, resolution, normalization); read-only afterwards.
struct EvaluationSet {
  std::string name;
  Dimensions resolution;
  std::vector<EvaluationSample> samples;
  std::vector<std::string> skipped;  // ids with an empty GT mask (no prompt exists)

  static EvaluationSet prepare(const DatasetManifest& manifest, Dimensions resolution, const Normalization& norm,
                               double mask_threshold = 0.5);
};

struct EvaluateOptions {
  double prediction_threshold = 0.5;
  /// Samples are scored on this many threads; results do not depend on it.
  int workers = 1;
};

/// DICE per sample: fixed perturbation p at model resolution, prediction
/// restored to the original resolution, scored against the original GT.
std::vector<DiceScore> per_sample_dice(const Segmenter& model, const EvaluationSet& set, int p,
                                       const EvaluateOptions& options = {});

/// Unweighted mean of per_sample_dice. Throws EmptyTestSet.
DiceScore evaluate_at_level(const Segmenter& model, const EvaluationSet& set, int p,
                            const EvaluateOptions& options = {});

/// Convenience overload that prepares the manifest first.
DiceScore evaluate_at_level(const Segmenter& model, const DatasetManifest& test_set, int p,
                            const EvaluateOptions& options = {}, double mask_threshold = 0.5);

}  // namespace ppsam
