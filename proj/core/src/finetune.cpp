#include "ppsam/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "ppsam/error.hpp"
#include "ppsam/evaluate.hpp"
#include "ppsam/metrics.hpp"

namespace ppsam {

namespace {

std::size_t idx(GroupId g) { return static_cast<std::size_t>(g); }

struct TrainSample {
  std::string sample_id;
  BoundingBox gt_box;  // tight box at model resolution
  std::optional<PreparedSample> cached;
};

}  // namespace

bool FreezePolicy::trainable(GroupId group) const {
  switch (group) {
    case GroupId::ImageEncoder: return image_encoder_trainable;
    case GroupId::PromptEncoder: return prompt_encoder_trainable;
    case GroupId::MaskDecoder: return mask_decoder_trainable;
  }
  return false;
}

std::string FreezePolicy::label() const {
  std::string out;
  out += image_encoder_trainable ? 'T' : 'F';
  out += prompt_encoder_trainable ? 'T' : 'F';
  out += mask_decoder_trainable ? 'T' : 'F';
  return out;
}

std::string to_string(SelectionMode mode) { return mode == SelectionMode::Validation ? "validation" : "test"; }

SelectionMode selection_mode_from_string(const std::string& name) {
  if (name == "validation") return SelectionMode::Validation;
  if (name == "test") return SelectionMode::Test;
  throw Error(ErrorCode::ConfigError, "selection_mode must be 'validation' or 'test', got '" + name + "'");
}

void validate(const RunConfig& config) {
  auto fail = [](const std::string& key, const std::string& why) {
    throw Error(ErrorCode::ConfigError, "'" + key + "' " + why);
  };
  validate(config.fewshot);
  if (!config.freeze.any_trainable()) throw Error(ErrorCode::AllFrozen, "freeze policy leaves nothing trainable");
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) fail("learning_rate", "must be > 0");
  if (!(config.weight_decay >= 0.0) || !std::isfinite(config.weight_decay)) fail("weight_decay", "must be >= 0");
  if (config.epochs < 1) fail("epochs", "must be >= 1");
  if (config.batch_size < 1) fail("batch_size", "must be >= 1");
  if (config.input_resolution < 8) fail("input_resolution", "must be >= 8");
  if (config.selection_perturbation < 0) fail("selection_perturbation", "must be >= 0");
  if (config.train_perturbation.magnitude < 0) fail("train_perturbation_px", "must be >= 0");
  if (config.loss_weights.ce < 0.0 || config.loss_weights.iou < 0.0 ||
      config.loss_weights.ce + config.loss_weights.iou <= 0.0) {
    fail("w_ce", "and 'w_iou' must be non-negative and not both zero");
  }
}

void apply_freeze_policy(Segmenter& model, const FreezePolicy& policy) {
  if (!policy.any_trainable()) throw Error(ErrorCode::AllFrozen, "freeze policy leaves nothing trainable");
  auto* net = model.trainable();
  if (!net) {
    throw Error(ErrorCode::UnsupportedBackend, to_string(model.spec().backend) + " backend is not trainable here");
  }
  for (auto g : kAllGroups) net->set_trainable(g, policy.trainable(g));
}

LossValue training_loss(std::span<const double> logits, const BinaryMask& gt, const LossWeights& weights,
                        std::span<double> d_logits) {
  const std::size_t n = gt.size();
  if (logits.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "logits have " + std::to_string(logits.size()) + " entries, mask has " +
                                              std::to_string(n));
  }
  if (!d_logits.empty() && d_logits.size() != n) throw Error(ErrorCode::ShapeMismatch, "gradient buffer size");
  const auto y = gt.data();
  std::vector<double> prob(n);
  double bce = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits[i];
    prob[i] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    bce += std::max(z, 0.0) - z * y[i] + std::log1p(std::exp(-std::abs(z)));
  }
  bce /= static_cast<double>(n);

  std::vector<double> d_iou;
  if (!d_logits.empty()) d_iou.resize(n);
  const auto overlap = soft_dice_and_iou(prob, gt, {}, d_iou);

  LossValue out;
  out.bce = bce;
  out.soft_iou = overlap.soft_iou;
  out.total = weights.ce * bce + weights.iou * (1.0 - overlap.soft_iou);
  if (!d_logits.empty()) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = prob[i];
      d_logits[i] = weights.ce * (p - y[i]) * inv_n - weights.iou * d_iou[i] * p * (1.0 - p);
    }
  }
  return out;
}

AdamW::AdamW(TrainableSegmenter& model, Options options) : model_(model), options_(options) {
  for (auto g : kAllGroups) {
    if (!model_.is_trainable(g)) continue;
    m_[idx(g)].assign(model_.parameters(g).size(), 0.0);
    v_[idx(g)].assign(model_.parameters(g).size(), 0.0);
  }
}

void AdamW::step(double grad_scale) {
  ++step_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  const double lr = options_.learning_rate;
  const double decay = 1.0 - lr * options_.weight_decay;
  for (auto g : kAllGroups) {
    if (!model_.is_trainable(g)) continue;
    auto params = model_.parameters(g);
    const auto grads = model_.gradients(g);
    auto& m = m_[idx(g)];
    auto& v = v_[idx(g)];
    if (m.size() != params.size()) {
      // Group was unfrozen after construction.
      m.assign(params.size(), 0.0);
      v.assign(params.size(), 0.0);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double grad = grads[i] * grad_scale;
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * grad;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * grad * grad;
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + options_.eps);
      params[i] = static_cast<float>(params[i] * decay - lr * update);
    }
  }
}

Checkpoint snapshot(const TrainableSegmenter& model, const FreezePolicy& freeze, std::string fingerprint) {
  Checkpoint cp;
  cp.spec = model.spec();
  cp.freeze = freeze;
  cp.run_config_fingerprint = std::move(fingerprint);
  for (auto g : kAllGroups) {
    const auto p = model.parameters(g);
    cp.weights[idx(g)].assign(p.begin(), p.end());
  }
  return cp;
}

void restore(TrainableSegmenter& model, const Checkpoint& checkpoint) {
  for (auto g : kAllGroups) {
    auto p = model.parameters(g);
    const auto& w = checkpoint.weights[idx(g)];
    if (p.size() != w.size()) {
      throw Error(ErrorCode::ShapeMismatch, "checkpoint " + to_string(g) + " has " + std::to_string(w.size()) +
                                                " weights, model has " + std::to_string(p.size()));
    }
    std::copy(w.begin(), w.end(), p.begin());
  }
}

namespace {

constexpr char kCheckpointMagic[8] = {'P', 'P', 'S', 'A', 'M', 'C', 'K', '1'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  nlohmann::json header;
  header["backend"] = to_string(checkpoint.spec.backend);
  header["variant"] = checkpoint.spec.variant;
  header["input_resolution"] = checkpoint.spec.input_resolution;
  header["seed"] = checkpoint.spec.seed;
  header["freeze"] = checkpoint.freeze.label();
  header["run_config_fingerprint"] = checkpoint.run_config_fingerprint;
  header["epoch"] = checkpoint.epoch;
  header["val_dice"] = checkpoint.val_dice;
  for (auto g : kAllGroups) header["counts"][to_string(g)] = checkpoint.weights[idx(g)].size();
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& w : checkpoint.weights) {
      out.write(reinterpret_cast<const char*>(w.data()), static_cast<std::streamsize>(w.size() * sizeof(float)));
    }
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open checkpoint " + path.string());
  auto corrupt = [&](const std::string& why) {
    return Error(ErrorCode::CorruptFile, "checkpoint " + path.string() + ": " + why);
  };
  char magic[sizeof(kCheckpointMagic)];
  std::uint64_t len = 0;
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw corrupt("bad magic");
  }
  if (!in.read(reinterpret_cast<char*>(&len), sizeof(len)) || len > (std::uint64_t{1} << 24)) {
    throw corrupt("bad header length");
  }
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw corrupt("truncated header");

  Checkpoint cp;
  try {
    const auto header = nlohmann::json::parse(text);
    cp.spec.backend = backend_from_string(header.at("backend").get<std::string>());
    cp.spec.variant = header.at("variant").get<std::string>();
    cp.spec.input_resolution = header.at("input_resolution").get<int>();
    cp.spec.seed = header.at("seed").get<std::uint64_t>();
    const auto label = header.at("freeze").get<std::string>();
    if (label.size() != 3) throw corrupt("bad freeze label");
    cp.freeze = {label[0] == 'T', label[1] == 'T', label[2] == 'T'};
    cp.run_config_fingerprint = header.at("run_config_fingerprint").get<std::string>();
    cp.epoch = header.at("epoch").get<int>();
    cp.val_dice = header.at("val_dice").get<double>();
    for (auto g : kAllGroups) cp.weights[idx(g)].resize(header.at("counts").at(to_string(g)).get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw corrupt(e.what());
  }
  for (auto& w : cp.weights) {
    if (!in.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(w.size() * sizeof(float)))) {
      throw corrupt("truncated weights");
    }
  }
  return cp;
}

GeometryRng perturbation_rng(const PerturbationPolicy& policy, std::uint64_t run_seed, std::uint64_t step) {
  std::seed_seq seq{policy.rng_seed, run_seed, step};
  return GeometryRng(seq);
}

TrainResult train(Segmenter& model, const DatasetManifest& train_set, const RunConfig& config,
                  const DatasetManifest& validation_set, const TrainOptions& options) {
  auto* net = model.trainable();
  if (!net) {
    throw Error(ErrorCode::UnsupportedBackend, to_string(model.spec().backend) + " backend cannot be fine-tuned");
  }
  validate(config);
  const Dimensions res = model.resolution();
  if (config.input_resolution != res.width) {
    throw Error(ErrorCode::ConfigError, "'input_resolution' is " + std::to_string(config.input_resolution) +
                                            " but the model runs at " + std::to_string(res.width));
  }
  if (config.fewshot.zero_shot()) throw Error(ErrorCode::ConfigError, "zero-shot runs are not trained");
  if (train_set.empty()) throw Error(ErrorCode::EmptyTrainSet, "training set '" + train_set.name + "' is empty");
  if (validation_set.empty()) {
    throw Error(ErrorCode::EmptyDataset, "checkpoint selection set '" + validation_set.name + "' is empty");
  }
  apply_freeze_policy(model, config.freeze);

  const auto norm = model.normalization();
  const std::size_t sample_bytes = res.area() * (3 * sizeof(float) + 1);
  std::size_t cached_bytes = 0;
  TrainResult result;
  std::vector<TrainSample> samples;
  for (const auto& record : train_set.records) {
    auto prepared = prepare_sample(record, res, options.mask_threshold, norm);
    const auto original = load_original_mask(record, options.mask_threshold);
    if (original.empty_foreground()) {
      ++result.log.skipped_samples;
      continue;
    }
    TrainSample s{record.sample_id, rescale_bbox(extract_bbox(original), original.dims(), res), std::nullopt};
    if (cached_bytes + sample_bytes <= options.cache_budget_bytes) {
      s.cached = std::move(prepared);
      cached_bytes += sample_bytes;
    }
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw Error(ErrorCode::EmptyTrainSet, "every training sample has an empty mask");
  std::map<std::string, const SampleRecord*> by_id;
  for (const auto& r : train_set.records) by_id.emplace(r.sample_id, &r);

  const auto validation = EvaluationSet::prepare(validation_set, res, norm, options.mask_threshold);
  const EvaluateOptions eval_options{options.prediction_threshold};

  AdamW optimizer(*net, {config.learning_rate, config.weight_decay});
  const std::size_t full = res.area();
  std::vector<double> logits(full);
  std::vector<double> d_logits(full);
  std::vector<float> d_logits_f(full);
  std::uint64_t step = 0;
  bool have_best = false;

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::seed_seq shuffle_seq{config.run_seed, static_cast<std::uint64_t>(epoch), std::uint64_t{0xe90c}};
    std::mt19937_64 shuffle_rng(shuffle_seq);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      net->zero_grad();
      for (std::size_t b = start; b < stop; ++b) {
        const auto& sample = samples[order[b]];
        const PreparedSample fresh =
            sample.cached ? PreparedSample{}
                          : prepare_sample(*by_id.at(sample.sample_id), res, options.mask_threshold, norm);
        const PreparedSample& prepared = sample.cached ? *sample.cached : fresh;

        auto rng = perturbation_rng(config.train_perturbation, config.run_seed, step);
        const auto prompt = apply_perturbation(sample.gt_box, config.train_perturbation, rng, res);
        const auto out = net->forward_train(prepared.image, prompt);
        std::copy(out.begin(), out.end(), logits.begin());
        const auto loss = training_loss(logits, prepared.mask, config.loss_weights, d_logits);
        if (!std::isfinite(loss.total)) {
          throw Error(ErrorCode::Diverged, "non-finite loss at epoch " + std::to_string(epoch) + ", sample '" +
                                               sample.sample_id + "'");
        }
        loss_sum += loss.total;
        std::transform(d_logits.begin(), d_logits.end(), d_logits_f.begin(),
                       [](double v) { return static_cast<float>(v); });
        net->backward(d_logits_f);
        ++step;
      }
      optimizer.step(1.0 / static_cast<double>(stop - start));
    }

    EpochRecord record;
    record.epoch = epoch;
    record.mean_loss = loss_sum / static_cast<double>(samples.size());
    record.val_dice = evaluate_at_level(model, validation, config.selection_perturbation, eval_options).value;
    if (!have_best || record.val_dice > result.best.val_dice) {
      record.is_best = true;
      have_best = true;
      result.best = snapshot(*net, config.freeze, options.run_config_fingerprint);
      result.best.epoch = epoch;
      result.best.val_dice = record.val_dice;
    }
    result.log.epochs.push_back(record);
    if (options.on_epoch) options.on_epoch(record);
  }
  restore(*net, result.best);
  return result;
}

void write_training_log_csv(const std::filesystem::path& path, const TrainingLog& log) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "epoch,mean_loss,val_dice,is_best\n";
  char buf[128];
  for (const auto& e : log.epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.2f,%d\n", e.epoch, e.mean_loss, e.val_dice, e.is_best ? 1 : 0);
    out << buf;
  }
}

}  // namespace ppsam
