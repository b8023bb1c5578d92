#include "ppsam/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include "ppsam/error.hpp"

namespace ppsam {

EvaluationSet EvaluationSet::prepare(const DatasetManifest& manifest, Dimensions resolution,
                                     const Normalization& norm, double mask_threshold) {
  EvaluationSet set;
  set.name = manifest.name;
  set.resolution = resolution;
  for (const auto& record : manifest.records) {
    auto original = load_original_mask(record, mask_threshold);
    if (original.empty_foreground()) {
      set.skipped.push_back(record.sample_id);
      continue;
    }
    const auto box = rescale_bbox(extract_bbox(original), original.dims(), resolution);
    auto prepared = prepare_sample(record, resolution, mask_threshold, norm);
    set.samples.push_back({record.sample_id, std::move(prepared.image), box, std::move(original)});
  }
  return set;
}

std::vector<DiceScore> per_sample_dice(const Segmenter& model, const EvaluationSet& set, int p,
                                       const EvaluateOptions& options) {
  if (set.samples.empty()) throw Error(ErrorCode::EmptyTestSet, "test set '" + set.name + "' has no scorable samples");
  if (set.resolution != model.resolution()) {
    throw Error(ErrorCode::ShapeMismatch, "evaluation set was prepared for a different model resolution");
  }
  std::vector<DiceScore> scores(set.samples.size());
  auto score = [&](std::size_t i) {
    const auto& sample = set.samples[i];
    const auto prompt = perturb_fixed(sample.prompt, p, set.resolution);
    const auto probabilities = model.predict(sample.image, prompt);
    const auto prediction =
        restore_to_original(probabilities, sample.original_mask.dims(), options.prediction_threshold);
    scores[i] = dice(sample.original_mask, prediction);
  };
  const std::size_t workers =
      std::min<std::size_t>(set.samples.size(), static_cast<std::size_t>(std::max(1, options.workers)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < set.samples.size(); ++i) score(i);
    return scores;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> failures(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < set.samples.size(); i = next++) score(i);
        } catch (...) {
          failures[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return scores;
}

DiceScore evaluate_at_level(const Segmenter& model, const EvaluationSet& set, int p, const EvaluateOptions& options) {
  auto scores = per_sample_dice(model, set, p, options);
  std::vector<double> values;
  values.reserve(scores.size());
  for (const auto& s : scores) values.push_back(s.value);
  // Sorted summation keeps the mean independent of sample order.
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return {sum / static_cast<double>(values.size())};
}

DiceScore evaluate_at_level(const Segmenter& model, const DatasetManifest& test_set, int p,
                            const EvaluateOptions& options, double mask_threshold) {
  if (test_set.empty()) throw Error(ErrorCode::EmptyTestSet, "test set '" + test_set.name + "' is empty");
  const auto set = EvaluationSet::prepare(test_set, model.resolution(), model.normalization(), mask_threshold);
  return evaluate_at_level(model, set, p, options);
}

}  // namespace ppsam
