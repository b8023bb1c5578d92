#pragma once

#include <array>
#include <memory>
#include <vector>

#include "ppsam/segmenter.hpp"

namespace ppsam {

/// Layer widths of the surrogate. Variant "B" and "L" select presets.
struct SurrogateArchitecture {
  int stride = 4;            // feature map is resolution / stride
  int encoder_hidden = 8;    // image encoder first conv width
  int encoder_channels = 8;  // image embedding width
  int prompt_channels = 4;   // prompt embedding width
  int decoder_channels = 8;
  int highres_channels = 2;  // full-resolution image projection

  static SurrogateArchitecture for_variant(const std::string& variant);
};

/// Compact three-part promptable segmenter trained on CPU.
///
///  image encoder:  avg-pool by `stride`, two 3x3 conv+ReLU layers, plus a 1x1
///                  full-resolution colour projection
///  prompt encoder: rasterises the box at feature resolution (coverage and an
///                  inscribed-ellipse prior), embeds it with a 1x1 layer, and
///                  scales a full-resolution box indicator
///  mask decoder:   3x3 conv+ReLU and a 1x1 head over [image, prompt]
///                  embeddings, bilinear upsampling, and a learned fusion of
///                  the full-resolution channels
class SurrogateSegmenter final : public TrainableSegmenter {
 public:
  explicit SurrogateSegmenter(SegmenterSpec spec);
  ~SurrogateSegmenter() override;
  SurrogateSegmenter(const SurrogateSegmenter&) = delete;
  SurrogateSegmenter& operator=(const SurrogateSegmenter&) = delete;

  const SegmenterSpec& spec() const override { return spec_; }
  const SurrogateArchitecture& architecture() const { return arch_; }
  Normalization normalization() const override;
  ProbabilityMap predict(const ImageTensor& image, const BoundingBox& prompt) const override;
  std::vector<ParameterGroup> parameter_groups() const override;

  void set_trainable(GroupId group, bool trainable) override;
  bool is_trainable(GroupId group) const override;
  std::span<float> parameters(GroupId group) override;
  std::span<const float> parameters(GroupId group) const override;
  std::span<float> gradients(GroupId group) override;
  void zero_grad() override;

  std::vector<float> forward_train(const ImageTensor& image, const BoundingBox& prompt) override;
  void backward(std::span<const float> d_logits) override;

  std::size_t parameter_count() const;

  struct Activations;

 private:
  void initialise();
  void forward(const ImageTensor& image, const BoundingBox& prompt, Activations& act) const;

  SegmenterSpec spec_;
  SurrogateArchitecture arch_;
  std::array<std::vector<float>, 3> params_;
  std::array<std::vector<float>, 3> grads_;
  std::array<bool, 3> trainable_{true, true, true};
  std::unique_ptr<Activations> cache_;
};

}  // namespace ppsam
