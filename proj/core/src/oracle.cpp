#include "ppsam/oracle.hpp"

#include "ppsam/error.hpp"

namespace ppsam {

OracleSegmenter::OracleSegmenter(SegmenterSpec spec) : spec_(std::move(spec)) {
  spec_.backend = Backend::Oracle;
  spec_.checkpoint.reset();
  validate(spec_);
}

ProbabilityMap OracleSegmenter::predict(const ImageTensor& /*image*/, const BoundingBox& prompt) const {
  const auto res = resolution();
  check_prompt(prompt, res);
  ProbabilityMap map{res.height, res.width, std::vector<float>(res.area(), 0.0f)};
  for (int y = prompt.y_min; y < prompt.y_max; ++y) {
    std::fill_n(map.data.begin() + static_cast<std::ptrdiff_t>(y) * res.width + prompt.x_min, prompt.width(), 1.0f);
  }
  return map;
}

std::vector<ParameterGroup> OracleSegmenter::parameter_groups() const {
  throw Error(ErrorCode::UnsupportedBackend, "the oracle backend has no parameters");
}

}  // namespace ppsam
