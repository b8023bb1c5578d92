#include "ppsam/foundation.hpp"

#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ppsam/error.hpp"

namespace ppsam {

namespace {

struct VitConfig {
  std::int64_t embed_dim;
  int depth;
  int heads;
  std::vector<int> global_blocks;
};

VitConfig vit_config(const std::string& variant) {
  if (variant == "B") return {768, 12, 12, {2, 5, 8, 11}};
  if (variant == "L") return {1024, 24, 16, {5, 11, 17, 23}};
  if (variant == "H") return {1280, 32, 16, {7, 15, 23, 31}};
  throw Error(ErrorCode::ConfigError, "unknown foundation variant '" + variant + "' (expected B, L or H)");
}

void add(std::vector<TensorInfo>& out, std::string name, std::vector<std::int64_t> shape) {
  out.push_back({std::move(name), "F32", std::move(shape)});
}

void add_linear(std::vector<TensorInfo>& out, const std::string& name, std::int64_t in, std::int64_t outf) {
  add(out, name + ".weight", {outf, in});
  add(out, name + ".bias", {outf});
}

void add_norm(std::vector<TensorInfo>& out, const std::string& name, std::int64_t dim) {
  add(out, name + ".weight", {dim});
  add(out, name + ".bias", {dim});
}

void add_attention(std::vector<TensorInfo>& out, const std::string& name, std::int64_t dim, std::int64_t internal) {
  add_linear(out, name + ".q_proj", dim, internal);
  add_linear(out, name + ".k_proj", dim, internal);
  add_linear(out, name + ".v_proj", dim, internal);
  add_linear(out, name + ".out_proj", internal, dim);
}

void add_mlp(std::vector<TensorInfo>& out, const std::string& name, std::int64_t in, std::int64_t hidden,
             std::int64_t outf, int layers) {
  for (int i = 0; i < layers; ++i) {
    const std::int64_t a = i == 0 ? in : hidden;
    const std::int64_t b = i == layers - 1 ? outf : hidden;
    add_linear(out, name + ".layers." + std::to_string(i), a, b);
  }
}

}  // namespace

std::int64_t TensorInfo::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "F64" || dtype == "I64" || dtype == "U64") return 8;
  if (dtype == "F32" || dtype == "I32" || dtype == "U32") return 4;
  if (dtype == "F16" || dtype == "BF16" || dtype == "I16" || dtype == "U16") return 2;
  if (dtype == "I8" || dtype == "U8" || dtype == "BOOL" || dtype == "F8_E4M3" || dtype == "F8_E5M2") return 1;
  throw Error(ErrorCode::CorruptFile, "unknown safetensors dtype '" + dtype + "'");
}

std::vector<TensorInfo> read_safetensors_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::CorruptFile, "cannot open checkpoint " + path.string());
  unsigned char len_bytes[8];
  in.read(reinterpret_cast<char*>(len_bytes), 8);
  if (in.gcount() != 8) throw Error(ErrorCode::CorruptFile, path.string() + " is too short for a safetensors file");
  std::uint64_t header_len = 0;
  for (int i = 7; i >= 0; --i) header_len = (header_len << 8) | len_bytes[i];
  const auto file_size = std::filesystem::file_size(path);
  if (header_len > file_size - 8 || header_len > (std::uint64_t{1} << 30)) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": header length " + std::to_string(header_len) +
                                            " exceeds the file");
  }
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(header);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }
  const std::uint64_t data_size = file_size - 8 - header_len;
  std::vector<TensorInfo> out;
  for (const auto& [name, entry] : doc.items()) {
    if (name == "__metadata__") continue;
    try {
      TensorInfo info{name, entry.at("dtype").get<std::string>(), entry.at("shape").get<std::vector<std::int64_t>>()};
      const auto begin = entry.at("data_offsets").at(0).get<std::uint64_t>();
      const auto end = entry.at("data_offsets").at(1).get<std::uint64_t>();
      const auto expected = static_cast<std::uint64_t>(info.element_count()) * dtype_size(info.dtype);
      if (end < begin || end - begin != expected || end > data_size) {
        throw Error(ErrorCode::CorruptFile, path.string() + ": tensor '" + name + "' has an inconsistent byte range");
      }
      out.push_back(std::move(info));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::CorruptFile, path.string() + ": tensor '" + name + "': " + e.what());
    }
  }
  return out;
}

std::optional<GroupId> foundation_group_for(const std::string& tensor_name) {
  auto starts = [&](std::string_view prefix) { return tensor_name.rfind(prefix, 0) == 0; };
  if (starts("image_encoder.") || starts("vision_encoder.")) return GroupId::ImageEncoder;
  if (starts("prompt_encoder.") || starts("shared_image_embedding.")) return GroupId::PromptEncoder;
  if (starts("mask_decoder.")) return GroupId::MaskDecoder;
  return std::nullopt;
}

std::vector<TensorInfo> foundation_reference_layout(const std::string& variant) {
  const auto cfg = vit_config(variant);
  const std::int64_t e = cfg.embed_dim;
  const std::int64_t head_dim = e / cfg.heads;
  constexpr std::int64_t kGrid = 64;    // 1024 / 16 patches per side
  constexpr std::int64_t kWindow = 14;  // windowed attention size
  constexpr std::int64_t kPromptDim = 256;
  std::vector<TensorInfo> out;

  // Image encoder.
  add(out, "image_encoder.pos_embed", {1, kGrid, kGrid, e});
  add(out, "image_encoder.patch_embed.proj.weight", {e, 3, 16, 16});
  add(out, "image_encoder.patch_embed.proj.bias", {e});
  for (int i = 0; i < cfg.depth; ++i) {
    const std::string b = "image_encoder.blocks." + std::to_string(i);
    const bool global = std::find(cfg.global_blocks.begin(), cfg.global_blocks.end(), i) != cfg.global_blocks.end();
    const std::int64_t span = global ? kGrid : kWindow;
    add_norm(out, b + ".norm1", e);
    add_linear(out, b + ".attn.qkv", e, 3 * e);
    add_linear(out, b + ".attn.proj", e, e);
    add(out, b + ".attn.rel_pos_h", {2 * span - 1, head_dim});
    add(out, b + ".attn.rel_pos_w", {2 * span - 1, head_dim});
    add_norm(out, b + ".norm2", e);
    add_linear(out, b + ".mlp.lin1", e, 4 * e);
    add_linear(out, b + ".mlp.lin2", 4 * e, e);
  }
  add(out, "image_encoder.neck.0.weight", {kPromptDim, e, 1, 1});
  add_norm(out, "image_encoder.neck.1", kPromptDim);
  add(out, "image_encoder.neck.2.weight", {kPromptDim, kPromptDim, 3, 3});
  add_norm(out, "image_encoder.neck.3", kPromptDim);

  // Prompt encoder (the Fourier positional matrix is a buffer, not a parameter).
  for (int i = 0; i < 4; ++i) add(out, "prompt_encoder.point_embeddings." + std::to_string(i) + ".weight", {1, kPromptDim});
  add(out, "prompt_encoder.not_a_point_embed.weight", {1, kPromptDim});
  add(out, "prompt_encoder.mask_downscaling.0.weight", {4, 1, 2, 2});
  add(out, "prompt_encoder.mask_downscaling.0.bias", {4});
  add_norm(out, "prompt_encoder.mask_downscaling.1", 4);
  add(out, "prompt_encoder.mask_downscaling.3.weight", {16, 4, 2, 2});
  add(out, "prompt_encoder.mask_downscaling.3.bias", {16});
  add_norm(out, "prompt_encoder.mask_downscaling.4", 16);
  add(out, "prompt_encoder.mask_downscaling.6.weight", {kPromptDim, 16, 1, 1});
  add(out, "prompt_encoder.mask_downscaling.6.bias", {kPromptDim});
  add(out, "prompt_encoder.no_mask_embed.weight", {1, kPromptDim});

  // Mask decoder: two-way transformer plus upscaling and hypernetwork heads.
  const std::string t = "mask_decoder.transformer";
  for (int i = 0; i < 2; ++i) {
    const std::string l = t + ".layers." + std::to_string(i);
    add_attention(out, l + ".self_attn", kPromptDim, kPromptDim);
    add_norm(out, l + ".norm1", kPromptDim);
    add_attention(out, l + ".cross_attn_token_to_image", kPromptDim, kPromptDim / 2);
    add_norm(out, l + ".norm2", kPromptDim);
    add_linear(out, l + ".mlp.lin1", kPromptDim, 2048);
    add_linear(out, l + ".mlp.lin2", 2048, kPromptDim);
    add_norm(out, l + ".norm3", kPromptDim);
    add_norm(out, l + ".norm4", kPromptDim);
    add_attention(out, l + ".cross_attn_image_to_token", kPromptDim, kPromptDim / 2);
  }
  add_attention(out, t + ".final_attn_token_to_image", kPromptDim, kPromptDim / 2);
  add_norm(out, t + ".norm_final_attn", kPromptDim);
  add(out, "mask_decoder.iou_token.weight", {1, kPromptDim});
  add(out, "mask_decoder.mask_tokens.weight", {4, kPromptDim});
  add(out, "mask_decoder.output_upscaling.0.weight", {kPromptDim, 64, 2, 2});
  add(out, "mask_decoder.output_upscaling.0.bias", {64});
  add_norm(out, "mask_decoder.output_upscaling.1", 64);
  add(out, "mask_decoder.output_upscaling.3.weight", {64, 32, 2, 2});
  add(out, "mask_decoder.output_upscaling.3.bias", {32});
  for (int i = 0; i < 4; ++i) {
    add_mlp(out, "mask_decoder.output_hypernetworks_mlps." + std::to_string(i), kPromptDim, kPromptDim, 32, 3);
  }
  add_mlp(out, "mask_decoder.iou_prediction_head", kPromptDim, 256, 4, 3);
  return out;
}

FoundationSegmenter::FoundationSegmenter(SegmenterSpec spec, std::shared_ptr<FoundationRuntime> runtime)
    : spec_(std::move(spec)), runtime_(std::move(runtime)) {
  spec_.backend = Backend::Foundation;
  validate(spec_);
  const auto& path = *spec_.checkpoint;
  if (path.extension() != ".safetensors") {
    throw Error(ErrorCode::ConfigError, "foundation checkpoints are read as .safetensors; convert " + path.string());
  }
  tensors_ = read_safetensors_header(path);

  // A wrong variant/checkpoint pairing shows up as an image-encoder size mismatch.
  std::int64_t expected = 0;
  for (const auto& t : foundation_reference_layout(spec_.variant)) {
    if (foundation_group_for(t.name) == GroupId::ImageEncoder) expected += t.element_count();
  }
  std::int64_t found = 0;
  for (const auto& t : tensors_) {
    if (foundation_group_for(t.name) == GroupId::ImageEncoder) found += t.element_count();
  }
  if (found != expected) {
    throw Error(ErrorCode::ConfigError, "checkpoint image encoder has " + std::to_string(found) +
                                            " parameters; variant " + spec_.variant + " expects " +
                                            std::to_string(expected));
  }
}

Normalization FoundationSegmenter::normalization() const {
  return {{123.675f, 116.28f, 103.53f}, {58.395f, 57.12f, 57.375f}};
}

std::array<float, 4> FoundationSegmenter::to_upstream_box(const BoundingBox& box) {
  return {static_cast<float>(box.x_min), static_cast<float>(box.y_min), static_cast<float>(box.x_max),
          static_cast<float>(box.y_max)};
}

ProbabilityMap FoundationSegmenter::predict(const ImageTensor& image, const BoundingBox& prompt) const {
  check_prompt(prompt, resolution());
  if (!runtime_) {
    throw Error(ErrorCode::BackendUnavailable, "no foundation runtime attached; inference needs the upstream engine");
  }
  return runtime_->predict(image, to_upstream_box(prompt));
}

std::vector<ParameterGroup> FoundationSegmenter::parameter_groups() const {
  std::array<std::size_t, 3> counts{0, 0, 0};
  for (const auto& t : tensors_) {
    if (auto g = foundation_group_for(t.name)) counts[static_cast<std::size_t>(*g)] += t.element_count();
  }
  auto* train = runtime_ ? runtime_->trainable() : nullptr;
  std::vector<ParameterGroup> out;
  for (auto g : kAllGroups) {
    out.push_back({g, counts[static_cast<std::size_t>(g)], train ? train->is_trainable(g) : true});
  }
  return out;
}

TrainableSegmenter* FoundationSegmenter::trainable() { return runtime_ ? runtime_->trainable() : nullptr; }

}  // namespace ppsam
