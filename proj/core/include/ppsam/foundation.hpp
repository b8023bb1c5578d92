#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ppsam/segmenter.hpp"

namespace ppsam {

struct TensorInfo {
  std::string name;
  std::string dtype;  // safetensors dtype tag, e.g. "F32"
  std::vector<std::int64_t> shape;

  std::int64_t element_count() const;
};

/// Reads the JSON header of a .safetensors file and checks that every tensor's
/// byte range fits the file. Throws CorruptFile.
std::vector<TensorInfo> read_safetensors_header(const std::filesystem::path& path);

/// Bytes per element for a safetensors dtype tag; throws CorruptFile for unknown tags.
std::size_t dtype_size(const std::string& dtype);

/// Maps an upstream parameter name to its submodule. Accepts both the original
/// release naming (image_encoder.*) and the transformers naming (vision_encoder.*).
/// Returns nullopt for tensors outside the three submodules.
std::optional<GroupId> foundation_group_for(const std::string& tensor_name);

/// Parameter tensors of the published ViT-B / ViT-L / ViT-H promptable
/// segmenters, derived from their architecture hyper-parameters.
std::vector<TensorInfo> foundation_reference_layout(const std::string& variant);

/// Upstream inference/training engine (e.g. a libtorch build of the published
/// model). Boxes arrive as continuous [x0, y0, x1, y1] in model pixels.
class FoundationRuntime {
 public:
  virtual ~FoundationRuntime() = default;
  virtual ProbabilityMap predict(const ImageTensor& image, const std::array<float, 4>& box_xyxy) const = 0;
  /// Non-null when the runtime supports in-process fine-tuning.
  virtual TrainableSegmenter* trainable() { return nullptr; }
};

/// Adapter over an externally published pre-trained segmenter. Weights are
/// never bundled: the checkpoint is read for its parameter layout, and
/// inference is delegated to an attached FoundationRuntime.
class FoundationSegmenter final : public Segmenter {
 public:
  FoundationSegmenter(SegmenterSpec spec, std::shared_ptr<FoundationRuntime> runtime = nullptr);

  const SegmenterSpec& spec() const override { return spec_; }
  /// Pixel statistics the upstream model was trained with.
  Normalization normalization() const override;
  ProbabilityMap predict(const ImageTensor& image, const BoundingBox& prompt) const override;
  std::vector<ParameterGroup> parameter_groups() const override;
  TrainableSegmenter* trainable() override;

  /// Box in the upstream convention. The exclusive max edge maps directly to
  /// the continuous right/bottom coordinate.
  static std::array<float, 4> to_upstream_box(const BoundingBox& box);

  const std::vector<TensorInfo>& tensors() const { return tensors_; }

 private:
  SegmenterSpec spec_;
  std::shared_ptr<FoundationRuntime> runtime_;
  std::vector<TensorInfo> tensors_;
};

}  // namespace ppsam
