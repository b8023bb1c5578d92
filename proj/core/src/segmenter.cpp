#include "ppsam/segmenter.hpp"

#include "ppsam/error.hpp"
#include "ppsam/finetune.hpp"
#include "ppsam/foundation.hpp"
#include "ppsam/oracle.hpp"
#include "ppsam/surrogate.hpp"

namespace ppsam {

std::string to_string(Backend backend) {
  switch (backend) {
    case Backend::Foundation: return "foundation";
    case Backend::Surrogate: return "surrogate";
    case Backend::Oracle: return "oracle";
  }
  return "surrogate";
}

Backend backend_from_string(const std::string& name) {
  if (name == "foundation") return Backend::Foundation;
  if (name == "surrogate") return Backend::Surrogate;
  if (name == "oracle") return Backend::Oracle;
  throw Error(ErrorCode::ConfigError, "unknown backend '" + name + "' (expected foundation, surrogate or oracle)");
}

std::string to_string(GroupId group) {
  switch (group) {
    case GroupId::ImageEncoder: return "image_encoder";
    case GroupId::PromptEncoder: return "prompt_encoder";
    case GroupId::MaskDecoder: return "mask_decoder";
  }
  return "image_encoder";
}

GroupId group_from_string(const std::string& name) {
  for (auto g : kAllGroups) {
    if (to_string(g) == name) return g;
  }
  throw Error(ErrorCode::ConfigError, "unknown parameter group '" + name + "'");
}

void validate(const SegmenterSpec& spec) {
  if (spec.input_resolution < 8) {
    throw Error(ErrorCode::ConfigError, "input_resolution must be at least 8, got " +
                                            std::to_string(spec.input_resolution));
  }
  if (spec.backend == Backend::Foundation && !spec.checkpoint) {
    throw Error(ErrorCode::ConfigError, "the foundation backend requires a checkpoint");
  }
}

void check_prompt(const BoundingBox& prompt, Dimensions resolution) {
  if (!prompt.within(resolution)) {
    throw Error(ErrorCode::InvalidPrompt, "prompt " + to_string(prompt) + " is not a non-empty box within " +
                                              std::to_string(resolution.width) + "x" +
                                              std::to_string(resolution.height));
  }
}

std::unique_ptr<Segmenter> make_segmenter(const SegmenterSpec& spec) {
  switch (spec.backend) {
    case Backend::Oracle: return std::make_unique<OracleSegmenter>(spec);
    case Backend::Surrogate: {
      auto model = std::make_unique<SurrogateSegmenter>(spec);
      if (spec.checkpoint) {
        const auto cp = load_checkpoint(*spec.checkpoint);
        if (cp.spec.backend != Backend::Surrogate || cp.spec.variant != spec.variant ||
            cp.spec.input_resolution != spec.input_resolution) {
          throw Error(ErrorCode::ConfigError, "checkpoint " + spec.checkpoint->string() + " holds a " +
                                                  to_string(cp.spec.backend) + " " + cp.spec.variant + " model at " +
                                                  std::to_string(cp.spec.input_resolution) + " px");
        }
        restore(*model, cp);
      }
      return model;
    }
    case Backend::Foundation: return std::make_unique<FoundationSegmenter>(spec);
  }
  throw Error(ErrorCode::ConfigError, "unknown backend");
}

}  // namespace ppsam
