#include "ppsam/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "ppsam/error.hpp"

namespace ppsam {

using nlohmann::json;

namespace {

const std::set<std::string> kKnownKeys = {
    "backend", "variant", "checkpoint", "model_seed", "input_resolution",
    "data_root", "train_set", "split_file", "unseen_test_sets", "test_sets",
    "selection_mode", "validation_fraction", "validation_seed", "mask_threshold", "prediction_threshold",
    "k", "fewshot_seed",
    "image_encoder_trainable", "prompt_encoder_trainable", "mask_decoder_trainable",
    "train_perturbation", "train_perturbation_px", "perturbation_seed",
    "learning_rate", "weight_decay", "epochs", "batch_size", "w_ce", "w_iou",
    "selection_perturbation", "run_seed", "levels", "runs", "matrix", "model_id", "workers",
};

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::ConfigError, "config key '" + key + "': " + why);
}

class Reader {
 public:
  explicit Reader(const json& j) : j_(j) {}

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  std::string str(const std::string& key, std::string fallback) const {
    if (!has(key)) return fallback;
    if (!j_.at(key).is_string()) bad(key, "expected a string");
    return j_.at(key).get<std::string>();
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!j_.at(key).is_boolean()) bad(key, "expected true or false");
    return j_.at(key).get<bool>();
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) bad(key, "expected an integer");
    return v.get<std::int64_t>();
  }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    bad(key, "expected a non-negative integer");
  }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number()) bad(key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) bad(key, "must be finite");
    return d;
  }

  std::vector<std::string> strings(const std::string& key, std::vector<std::string> fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_array()) bad(key, "expected a list of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) bad(key, "expected a list of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  template <typename T>
  std::vector<T> integers(const std::string& key, std::vector<T> fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_array()) bad(key, "expected a list of integers");
    std::vector<T> out;
    for (const auto& e : v) {
      if (!e.is_number_integer() || e.get<std::int64_t>() < 0) bad(key, "expected non-negative integers");
      out.push_back(static_cast<T>(e.get<std::int64_t>()));
    }
    return out;
  }

 private:
  const json& j_;
};

int parse_k(const json& j) {
  if (!j.contains("k") || j.at("k").is_null()) return FewShotSpec::kFullShot;
  const auto& v = j.at("k");
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "full" || s == "FULL") return FewShotSpec::kFullShot;
    if (s == "zero-shot" || s == "zero") return FewShotSpec::kZeroShot;
    bad("k", "expected an integer, \"full\" or \"zero-shot\"");
  }
  if (!v.is_number_integer()) bad("k", "expected an integer, \"full\" or \"zero-shot\"");
  return static_cast<int>(v.get<std::int64_t>());
}

template <typename F>
void rethrow_as(const std::string& key, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) bad(key, e.what());
    throw;
  }
}

}  // namespace

std::string split_test_name(const std::string& train_set) { return train_set + "-test"; }

ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& default_data_root) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kKnownKeys.count(key)) bad(key, "unknown key");
  }
  const Reader r(j);
  ExperimentConfig c;

  rethrow_as("backend", [&] { c.model.backend = backend_from_string(r.str("backend", "surrogate")); });
  c.model.variant = r.str("variant", "B");
  if (r.has("checkpoint")) c.model.checkpoint = r.str("checkpoint", "");
  c.model.seed = r.seed("model_seed", 0);
  const auto res = r.integer("input_resolution", 1024);
  if (res < 8 || res > 8192) bad("input_resolution", "must be between 8 and 8192");
  c.model.input_resolution = static_cast<int>(res);
  c.run.input_resolution = static_cast<int>(res);
  rethrow_as("backend", [&] { validate(c.model); });

  c.data.data_root = r.str("data_root", default_data_root.string());
  c.data.train_set = r.str("train_set", "");
  if (r.has("split_file")) c.data.split_file = r.str("split_file", "");
  c.data.unseen_test_sets = r.strings("unseen_test_sets", {});
  rethrow_as("selection_mode",
             [&] { c.data.selection_mode = selection_mode_from_string(r.str("selection_mode", "validation")); });
  c.data.validation_fraction = r.number("validation_fraction", 0.1);
  if (!(c.data.validation_fraction > 0.0 && c.data.validation_fraction < 1.0)) {
    bad("validation_fraction", "must be in (0, 1)");
  }
  c.data.validation_seed = r.seed("validation_seed", 0);
  c.data.mask_threshold = r.number("mask_threshold", 0.5);
  if (!(c.data.mask_threshold >= 0.0 && c.data.mask_threshold < 1.0)) bad("mask_threshold", "must be in [0, 1)");
  c.data.prediction_threshold = r.number("prediction_threshold", 0.5);
  if (!(c.data.prediction_threshold > 0.0 && c.data.prediction_threshold < 1.0)) {
    bad("prediction_threshold", "must be in (0, 1)");
  }

  c.run.fewshot.k = parse_k(j);
  c.run.fewshot.seed = r.seed("fewshot_seed", 0);
  rethrow_as("k", [&] { validate(c.run.fewshot); });
  c.run.freeze.image_encoder_trainable = r.boolean("image_encoder_trainable", true);
  c.run.freeze.prompt_encoder_trainable = r.boolean("prompt_encoder_trainable", true);
  c.run.freeze.mask_decoder_trainable = r.boolean("mask_decoder_trainable", false);
  if (!c.run.freeze.any_trainable()) {
    throw Error(ErrorCode::AllFrozen, "config keys '*_trainable' freeze every parameter group");
  }
  PerturbationPolicy::Mode mode{};
  rethrow_as("train_perturbation",
             [&] { mode = perturbation_mode_from_string(r.str("train_perturbation", "variable")); });
  const auto px = r.integer("train_perturbation_px", 50);
  if (px < 0) bad("train_perturbation_px", "must be >= 0");
  c.run.train_perturbation = {mode, static_cast<int>(px), r.seed("perturbation_seed", 0)};
  if (mode == PerturbationPolicy::Mode::None) c.run.train_perturbation.magnitude = 0;

  c.run.learning_rate = r.number("learning_rate", 1e-4);
  if (!(c.run.learning_rate > 0.0)) bad("learning_rate", "must be > 0");
  c.run.weight_decay = r.number("weight_decay", 1e-4);
  if (c.run.weight_decay < 0.0) bad("weight_decay", "must be >= 0");
  const auto epochs = r.integer("epochs", 100);
  if (epochs < 1 || epochs > 1000000) bad("epochs", "must be >= 1");
  c.run.epochs = static_cast<int>(epochs);
  const auto batch = r.integer("batch_size", 1);
  if (batch < 1 || batch > 1000000) bad("batch_size", "must be >= 1");
  c.run.batch_size = static_cast<int>(batch);
  c.run.loss_weights = {r.number("w_ce", 1.0), r.number("w_iou", 1.0)};
  if (c.run.loss_weights.ce < 0.0) bad("w_ce", "must be >= 0");
  if (c.run.loss_weights.iou < 0.0) bad("w_iou", "must be >= 0");
  if (c.run.loss_weights.ce + c.run.loss_weights.iou <= 0.0) bad("w_ce", "w_ce and w_iou cannot both be zero");
  const auto sel = r.integer("selection_perturbation", 30);
  if (sel < 0 || sel > 100000) bad("selection_perturbation", "must be >= 0");
  c.run.selection_perturbation = static_cast<int>(sel);
  c.run.run_seed = r.seed("run_seed", 0);

  c.sweep.levels = r.integers<int>("levels", default_levels());
  c.sweep.runs = r.integers<std::uint64_t>("runs", {0, 1, 2, 3, 4});
  std::vector<std::string> default_tests;
  if (c.data.split_file && !c.data.train_set.empty()) default_tests.push_back(split_test_name(c.data.train_set));
  c.sweep.test_sets = r.strings("test_sets", default_tests);
  try {
    validate(c.sweep);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, std::string("config: ") + e.what());
  }

  if (r.has("matrix")) {
    const auto kind = r.str("matrix", "");
    experiment_kind_from_string(kind);
    c.matrix = kind;
  }
  c.model_id = r.str("model_id", "");
  const auto workers = r.integer("workers", 1);
  if (workers < 1 || workers > 256) bad("workers", "must be between 1 and 256");
  c.workers = static_cast<int>(workers);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::filesystem::path& default_data_root) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), default_data_root);
}

std::string canonical_json(const ExperimentConfig& c) {
  json j;  // std::map storage: keys come out sorted
  j["backend"] = to_string(c.model.backend);
  j["variant"] = c.model.variant;
  j["checkpoint"] = c.model.checkpoint ? json(c.model.checkpoint->string()) : json(nullptr);
  j["model_seed"] = c.model.seed;
  j["input_resolution"] = c.model.input_resolution;
  j["data_root"] = c.data.data_root.string();
  j["train_set"] = c.data.train_set;
  j["split_file"] = c.data.split_file ? json(c.data.split_file->string()) : json(nullptr);
  j["unseen_test_sets"] = c.data.unseen_test_sets;
  j["test_sets"] = c.sweep.test_sets;
  j["selection_mode"] = to_string(c.data.selection_mode);
  j["validation_fraction"] = c.data.validation_fraction;
  j["validation_seed"] = c.data.validation_seed;
  j["mask_threshold"] = c.data.mask_threshold;
  j["prediction_threshold"] = c.data.prediction_threshold;
  j["k"] = c.run.fewshot.k;
  j["fewshot_seed"] = c.run.fewshot.seed;
  j["image_encoder_trainable"] = c.run.freeze.image_encoder_trainable;
  j["prompt_encoder_trainable"] = c.run.freeze.prompt_encoder_trainable;
  j["mask_decoder_trainable"] = c.run.freeze.mask_decoder_trainable;
  j["train_perturbation"] = to_string(c.run.train_perturbation.mode);
  j["train_perturbation_px"] = c.run.train_perturbation.magnitude;
  j["perturbation_seed"] = c.run.train_perturbation.rng_seed;
  j["learning_rate"] = c.run.learning_rate;
  j["weight_decay"] = c.run.weight_decay;
  j["epochs"] = c.run.epochs;
  j["batch_size"] = c.run.batch_size;
  j["w_ce"] = c.run.loss_weights.ce;
  j["w_iou"] = c.run.loss_weights.iou;
  j["selection_perturbation"] = c.run.selection_perturbation;
  j["run_seed"] = c.run.run_seed;
  j["levels"] = c.sweep.levels;
  j["runs"] = c.sweep.runs;
  j["matrix"] = c.matrix ? json(*c.matrix) : json(nullptr);
  j["model_id"] = c.model_id;
  j["workers"] = c.workers;
  return j.dump();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::Io, "SHA-256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string fingerprint(const ExperimentConfig& config) { return sha256_hex(canonical_json(config)); }

std::string default_model_id(const ExperimentConfig& config) {
  if (!config.model_id.empty()) return config.model_id;
  return to_string(config.model.backend) + "-" + config.model.variant + "-" + shot_label(config.run.fewshot.k);
}

}  // namespace ppsam
