#pragma once

#include "ppsam/segmenter.hpp"

namespace ppsam {

/// Returns probability 1 inside the prompt box and 0 outside. Has no
/// parameters, so sweep results against rectangle ground truth have a closed form.
class OracleSegmenter final : public Segmenter {
 public:
  explicit OracleSegmenter(SegmenterSpec spec);

  const SegmenterSpec& spec() const override { return spec_; }
  Normalization normalization() const override { return {}; }
  ProbabilityMap predict(const ImageTensor& image, const BoundingBox& prompt) const override;
  std::vector<ParameterGroup> parameter_groups() const override;

 private:
  SegmenterSpec spec_;
};

}  // namespace ppsam
