#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ppsam/geometry.hpp"
#include "ppsam/image.hpp"

namespace ppsam {

enum class Backend { Foundation, Surrogate, Oracle };

std::string to_string(Backend backend);
Backend backend_from_string(const std::string& name);

/// The three submodules of a promptable segmenter.
enum class GroupId { ImageEncoder = 0, PromptEncoder = 1, MaskDecoder = 2 };

inline constexpr std::array<GroupId, 3> kAllGroups{GroupId::ImageEncoder, GroupId::PromptEncoder,
                                                   GroupId::MaskDecoder};

std::string to_string(GroupId group);
GroupId group_from_string(const std::string& name);

struct SegmenterSpec {
  Backend backend = Backend::Surrogate;
  std::string variant = "B";  // encoder scale
  int input_resolution = 256;
  std::optional<std::filesystem::path> checkpoint;
  std::uint64_t seed = 0;  // surrogate weight initialisation

  Dimensions resolution() const { return {input_resolution, input_resolution}; }
  bool operator==(const SegmenterSpec&) const = default;
};

/// Throws ConfigError when the fields are inconsistent (e.g. foundation without checkpoint).
void validate(const SegmenterSpec& spec);

struct ParameterGroup {
  GroupId group_id = GroupId::ImageEncoder;
  std::size_t parameter_count = 0;
  bool trainable = true;
};

class TrainableSegmenter;

/// Box-promptable binary segmenter. predict() is reentrant for fixed weights.
class Segmenter {
 public:
  virtual ~Segmenter() = default;

  virtual const SegmenterSpec& spec() const = 0;
  Dimensions resolution() const { return spec().resolution(); }

  /// Pixel normalization the model expects on 0..255 RGB input.
  virtual Normalization normalization() const = 0;

  /// Probabilities at model resolution. The prompt must be a valid box within
  /// the model resolution; throws InvalidPrompt otherwise.
  virtual ProbabilityMap predict(const ImageTensor& image, const BoundingBox& prompt) const = 0;

  /// Throws UnsupportedBackend for models without parameters.
  virtual std::vector<ParameterGroup> parameter_groups() const = 0;

  /// Non-null when the model can be fine-tuned in-process.
  virtual TrainableSegmenter* trainable() { return nullptr; }
};

/// Training hooks: per-group parameter storage, a caching forward pass, and
/// backprop from logits.
class TrainableSegmenter : public Segmenter {
 public:
  TrainableSegmenter* trainable() override { return this; }

  virtual void set_trainable(GroupId group, bool trainable) = 0;
  virtual bool is_trainable(GroupId group) const = 0;

  virtual std::span<float> parameters(GroupId group) = 0;
  virtual std::span<const float> parameters(GroupId group) const = 0;
  virtual std::span<float> gradients(GroupId group) = 0;
  virtual void zero_grad() = 0;

  /// Logits at model resolution; keeps activations for backward().
  virtual std::vector<float> forward_train(const ImageTensor& image, const BoundingBox& prompt) = 0;

  /// Accumulates d(loss)/d(parameters) of trainable groups for the last
  /// forward_train(), given d(loss)/d(logits).
  virtual void backward(std::span<const float> d_logits) = 0;
};

/// Throws InvalidPrompt unless the box is valid within the model resolution.
void check_prompt(const BoundingBox& prompt, Dimensions resolution);

std::unique_ptr<Segmenter> make_segmenter(const SegmenterSpec& spec);

}  // namespace ppsam
