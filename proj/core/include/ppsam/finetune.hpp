#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ppsam/data.hpp"
#include "ppsam/geometry.hpp"
#include "ppsam/segmenter.hpp"

namespace ppsam {

struct FreezePolicy {
  bool image_encoder_trainable = true;
  bool prompt_encoder_trainable = true;
  bool mask_decoder_trainable = false;

  bool trainable(GroupId group) const;
  bool any_trainable() const { return image_encoder_trainable || prompt_encoder_trainable || mask_decoder_trainable; }
  /// "TTF"-style flags in image encoder, prompt encoder, mask decoder order.
  std::string label() const;

  bool operator==(const FreezePolicy&) const = default;
};

struct LossWeights {
  double ce = 1.0;
  double iou = 1.0;

  bool operator==(const LossWeights&) const = default;
};

/// Checkpoint selection split.
enum class SelectionMode {
  Validation,  // held-out slice of the training pool
  Test,        // the first test set, reproducing the published protocol
};

std::string to_string(SelectionMode mode);
SelectionMode selection_mode_from_string(const std::string& name);

struct RunConfig {
  FewShotSpec fewshot;
  FreezePolicy freeze;
  PerturbationPolicy train_perturbation = PerturbationPolicy::variable(50);
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  int epochs = 100;
  int batch_size = 1;
  int input_resolution = 1024;
  LossWeights loss_weights;
  int selection_perturbation = 30;
  std::uint64_t run_seed = 0;

  bool operator==(const RunConfig&) const = default;
};

/// Throws ConfigError naming the offending field.
void validate(const RunConfig& config);

/// Sets each group's trainable flag from the policy. Throws AllFrozen when the
/// policy freezes every group and UnsupportedBackend for models that cannot train.
void apply_freeze_policy(Segmenter& model, const FreezePolicy& policy);

struct LossValue {
  double total = 0.0;
  double bce = 0.0;       // mean per-pixel binary cross-entropy on logits
  double soft_iou = 0.0;  // soft IoU of sigmoid(logits) with the target
};

/// w_ce * BCE(logits, gt) + w_iou * (1 - soft_iou(sigmoid(logits), gt)).
/// Writes d(total)/d(logits) when the span is non-empty.
LossValue training_loss(std::span<const double> logits, const BinaryMask& gt, const LossWeights& weights,
                        std::span<double> d_logits = {});

/// Decoupled weight decay Adam over the trainable groups of a model.
class AdamW {
 public:
  struct Options {
    double learning_rate = 1e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  AdamW(TrainableSegmenter& model, Options options);

  /// Applies the accumulated gradients, scaled by `grad_scale`. Frozen groups are untouched.
  void step(double grad_scale = 1.0);
  std::int64_t steps() const { return step_; }

 private:
  TrainableSegmenter& model_;
  Options options_;
  std::array<std::vector<double>, 3> m_;
  std::array<std::vector<double>, 3> v_;
  std::int64_t step_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_dice = 0.0;
  bool is_best = false;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  int skipped_samples = 0;  // samples dropped for having an empty mask
};

/// Self-contained model snapshot: weights per group plus provenance.
struct Checkpoint {
  SegmenterSpec spec;
  FreezePolicy freeze;
  std::string run_config_fingerprint;
  int epoch = 0;
  double val_dice = 0.0;
  std::array<std::vector<float>, 3> weights;
};

Checkpoint snapshot(const TrainableSegmenter& model, const FreezePolicy& freeze, std::string fingerprint);
/// Copies checkpoint weights into a model of the same architecture.
void restore(TrainableSegmenter& model, const Checkpoint& checkpoint);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainOptions {
  double mask_threshold = 0.5;
  double prediction_threshold = 0.5;
  std::string run_config_fingerprint;
  /// Prepared samples are kept in memory up to this many bytes.
  std::size_t cache_budget_bytes = std::size_t{1} << 30;
  /// Called after each epoch; for progress reporting.
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  Checkpoint best;
  TrainingLog log;
};

/// Step-wise seed for the prompt perturbation of a given run and step.
GeometryRng perturbation_rng(const PerturbationPolicy& policy, std::uint64_t run_seed, std::uint64_t step);

/// Fine-tunes `model` on `train_set` with perturbed box prompts and keeps the
/// epoch with the highest validation DICE at `selection_perturbation`. On
/// return the model holds the best weights.
TrainResult train(Segmenter& model, const DatasetManifest& train_set, const RunConfig& config,
                  const DatasetManifest& validation_set, const TrainOptions& options = {});

void write_training_log_csv(const std::filesystem::path& path, const TrainingLog& log);

}  // namespace ppsam
