#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ppsam/error.hpp"
#include "ppsam/finetune.hpp"
#include "ppsam/foundation.hpp"
#include "ppsam/oracle.hpp"
#include "ppsam/surrogate.hpp"
#include "test_support.hpp"

using namespace ppsam;
using ppsam::testing::TempDir;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected ppsam::Error";
  return ErrorCode::Io;
}

ImageTensor random_image(int res, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.f, 1.f);
  ImageTensor t{3, res, res, std::vector<float>(static_cast<std::size_t>(3) * res * res)};
  for (auto& v : t.data) v = n(rng);
  return t;
}

SegmenterSpec surrogate_spec(int res, std::uint64_t seed = 0, std::string variant = "B") {
  SegmenterSpec s;
  s.backend = Backend::Surrogate;
  s.input_resolution = res;
  s.seed = seed;
  s.variant = std::move(variant);
  return s;
}

/// Writes a safetensors file with the given tensors (F16), data left sparse.
void write_safetensors(const std::filesystem::path& path, const std::vector<TensorInfo>& tensors) {
  nlohmann::json header = nlohmann::json::object();
  std::int64_t offset = 0;
  for (const auto& t : tensors) {
    const std::int64_t bytes = t.element_count() * 2;
    header[t.name] = {{"dtype", "F16"}, {"shape", t.shape}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  header["__metadata__"] = {{"format", "pt"}};
  const std::string text = header.dump();
  {
    std::ofstream out(path, std::ios::binary);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out << text;
  }
  std::filesystem::resize_file(path, 8 + text.size() + static_cast<std::uintmax_t>(offset));
}

class FakeRuntime : public FoundationRuntime {
 public:
  ProbabilityMap predict(const ImageTensor& image, const std::array<float, 4>& box) const override {
    last_box = box;
    return ProbabilityMap{image.height, image.width, std::vector<float>(image.data.size() / 3, 0.25f)};
  }
  mutable std::array<float, 4> last_box{};
};

}  // namespace

TEST(Oracle, BoxInteriorIsOne) {
  SegmenterSpec spec;
  spec.backend = Backend::Oracle;
  spec.input_resolution = 32;
  const auto model = make_segmenter(spec);
  const auto img = random_image(32, 1);
  const auto p = model->predict(img, {4, 5, 10, 20});
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      const bool inside = c >= 4 && c < 10 && r >= 5 && r < 20;
      ASSERT_EQ(p.data[r * 32 + c], inside ? 1.0f : 0.0f);
    }
  }
  const auto full = model->predict(img, {0, 0, 32, 32});
  EXPECT_TRUE(std::all_of(full.data.begin(), full.data.end(), [](float v) { return v == 1.0f; }));
  EXPECT_EQ(code_of([&] { model->parameter_groups(); }), ErrorCode::UnsupportedBackend);
  EXPECT_EQ(model->trainable(), nullptr);
}

TEST(Predict, RejectsInvalidPrompts) {
  SurrogateSegmenter model(surrogate_spec(32));
  const auto img = random_image(32, 2);
  EXPECT_EQ(code_of([&] { model.predict(img, {5, 5, 5, 9}); }), ErrorCode::InvalidPrompt);
  EXPECT_EQ(code_of([&] { model.predict(img, {0, 0, 33, 10}); }), ErrorCode::InvalidPrompt);
}

TEST(Surrogate, DeterministicAndFinite) {
  SurrogateSegmenter a(surrogate_spec(64, 3));
  SurrogateSegmenter b(surrogate_spec(64, 3));
  const auto img = random_image(64, 4);
  const auto p1 = a.predict(img, {10, 10, 40, 50});
  const auto p2 = a.predict(img, {10, 10, 40, 50});
  const auto p3 = b.predict(img, {10, 10, 40, 50});
  EXPECT_EQ(p1.data, p2.data);
  EXPECT_EQ(p1.data, p3.data);
  ImageTensor zeros{3, 64, 64, std::vector<float>(3 * 64 * 64, 0.f)};
  const auto pz = a.predict(zeros, {0, 0, 64, 64});
  for (float v : pz.data) ASSERT_TRUE(std::isfinite(v));
}

TEST(Surrogate, ParameterGroupsPartitionTheModel) {
  for (const char* variant : {"B", "L"}) {
    SurrogateSegmenter m(surrogate_spec(64, 0, variant));
    const auto groups = m.parameter_groups();
    ASSERT_EQ(groups.size(), 3u);
    std::size_t total = 0;
    for (const auto& g : groups) {
      EXPECT_GT(g.parameter_count, 0u);
      EXPECT_EQ(g.parameter_count, m.parameters(g.group_id).size());
      total += g.parameter_count;
    }
    EXPECT_EQ(total, m.parameter_count());
    EXPECT_LE(total, 2'000'000u);
  }
  EXPECT_LT(SurrogateSegmenter(surrogate_spec(64, 0, "B")).parameter_count(),
            SurrogateSegmenter(surrogate_spec(64, 0, "L")).parameter_count());
}

TEST(Surrogate, FreezeReportsTrainableFlags) {
  SurrogateSegmenter m(surrogate_spec(32));
  apply_freeze_policy(m, FreezePolicy{});
  for (const auto& g : m.parameter_groups()) EXPECT_EQ(g.trainable, g.group_id != GroupId::MaskDecoder);
}

TEST(Surrogate, ForwardIsFastAt256) {
  SurrogateSegmenter m(surrogate_spec(256));
  const auto img = random_image(256, 5);
  m.predict(img, {30, 30, 200, 180});
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 5; ++i) m.predict(img, {30, 30, 200, 180});
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / 5;
  EXPECT_LT(ms, 50.0);
}

TEST(Surrogate, BackwardMatchesFiniteDifferences) {
  // Loss L = sum_i w_i * logit_i with fixed random weights w.
  const int res = 24;
  SurrogateSegmenter m(surrogate_spec(res, 7));
  for (auto g : kAllGroups) m.set_trainable(g, true);
  const auto img = random_image(res, 8);
  const BoundingBox box{5, 6, 17, 20};
  std::mt19937_64 rng(9);
  std::normal_distribution<float> nw(0.f, 1.f);
  std::vector<float> w(static_cast<std::size_t>(res) * res);
  for (auto& v : w) v = nw(rng);
  auto loss = [&] {
    const auto logits = m.forward_train(img, box);
    double s = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) s += static_cast<double>(w[i]) * logits[i];
    return s;
  };
  m.zero_grad();
  loss();
  m.backward(w);

  int checked = 0, bad = 0;
  for (auto g : kAllGroups) {
    auto params = m.parameters(g);
    const auto grads = m.gradients(g);
    const std::vector<float> analytic(grads.begin(), grads.end());
    std::uniform_int_distribution<std::size_t> pick(0, params.size() - 1);
    for (int k = 0; k < 40; ++k) {
      const std::size_t i = k < static_cast<int>(params.size()) && params.size() <= 40 ? k : pick(rng);
      const float saved = params[i];
      const float h = 1e-3f * std::max(1.0f, std::abs(saved));
      params[i] = saved + h;
      const double up = loss();
      params[i] = saved - h;
      const double dn = loss();
      params[i] = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double err = std::abs(fd - analytic[i]) / std::max(1e-2, std::abs(fd) + std::abs(analytic[i]));
      ++checked;
      if (err > 2e-2) ++bad;
    }
  }
  // ReLU kinks can flip a handful of finite-difference probes.
  EXPECT_LE(bad, checked / 20) << bad << " of " << checked << " probes disagree";
}

TEST(Surrogate, FrozenGroupsGetNoGradient) {
  SurrogateSegmenter m(surrogate_spec(24, 1));
  m.set_trainable(GroupId::ImageEncoder, false);
  m.zero_grad();
  const auto logits = m.forward_train(random_image(24, 2), {3, 3, 20, 20});
  m.backward(std::vector<float>(logits.size(), 1.0f));
  const auto gi = m.gradients(GroupId::ImageEncoder);
  EXPECT_TRUE(std::all_of(gi.begin(), gi.end(), [](float v) { return v == 0.0f; }));
  const auto gp = m.gradients(GroupId::PromptEncoder);
  EXPECT_TRUE(std::any_of(gp.begin(), gp.end(), [](float v) { return v != 0.0f; }));
}

TEST(Foundation, ReferenceLayoutCounts) {
  auto count = [](const std::string& variant, GroupId g) {
    std::int64_t n = 0;
    for (const auto& t : foundation_reference_layout(variant)) {
      if (foundation_group_for(t.name) == g) n += t.element_count();
    }
    return n;
  };
  EXPECT_EQ(count("B", GroupId::ImageEncoder), 89'670'912);
  EXPECT_EQ(count("B", GroupId::PromptEncoder), 6'220);
  EXPECT_EQ(count("B", GroupId::MaskDecoder), 4'058'340);
  EXPECT_GT(count("L", GroupId::ImageEncoder), count("B", GroupId::ImageEncoder));
  EXPECT_GT(count("H", GroupId::ImageEncoder), count("L", GroupId::ImageEncoder));
  EXPECT_EQ(count("L", GroupId::MaskDecoder), count("B", GroupId::MaskDecoder));
}

TEST(Foundation, GroupNaming) {
  EXPECT_EQ(foundation_group_for("image_encoder.blocks.0.attn.qkv.weight"), GroupId::ImageEncoder);
  EXPECT_EQ(foundation_group_for("vision_encoder.layers.0.mlp.lin1.weight"), GroupId::ImageEncoder);
  EXPECT_EQ(foundation_group_for("prompt_encoder.point_embeddings.0.weight"), GroupId::PromptEncoder);
  EXPECT_EQ(foundation_group_for("mask_decoder.iou_token.weight"), GroupId::MaskDecoder);
  EXPECT_EQ(foundation_group_for("something_else"), std::nullopt);
}

TEST(Foundation, LargeEncoderHasMoreParametersThanBase) {
  TempDir dir("foundation");
  write_safetensors(dir / "b.safetensors", foundation_reference_layout("B"));
  write_safetensors(dir / "l.safetensors", foundation_reference_layout("L"));
  auto spec = [&](const std::string& v, const std::string& file) {
    SegmenterSpec s;
    s.backend = Backend::Foundation;
    s.variant = v;
    s.input_resolution = 1024;
    s.checkpoint = dir / file;
    return s;
  };
  const auto b = make_segmenter(spec("B", "b.safetensors"));
  const auto l = make_segmenter(spec("L", "l.safetensors"));
  auto encoder = [](const Segmenter& m) {
    for (const auto& g : m.parameter_groups()) {
      if (g.group_id == GroupId::ImageEncoder) return g.parameter_count;
    }
    return std::size_t{0};
  };
  EXPECT_EQ(encoder(*b), 89'670'912u);
  EXPECT_GT(encoder(*l), encoder(*b));
  // Variant/checkpoint mismatch is caught up front.
  EXPECT_EQ(code_of([&] { make_segmenter(spec("L", "b.safetensors")); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { b->predict(ImageTensor{3, 1024, 1024, {}}, {0, 0, 10, 10}); }),
            ErrorCode::BackendUnavailable);
}

TEST(Foundation, RuntimeReceivesUpstreamBox) {
  TempDir dir("runtime");
  write_safetensors(dir / "b.safetensors", foundation_reference_layout("B"));
  SegmenterSpec s;
  s.backend = Backend::Foundation;
  s.input_resolution = 16;
  s.checkpoint = dir / "b.safetensors";
  auto runtime = std::make_shared<FakeRuntime>();
  FoundationSegmenter model(s, runtime);
  const auto out = model.predict(ImageTensor{3, 16, 16, std::vector<float>(3 * 16 * 16)}, {2, 3, 9, 12});
  EXPECT_EQ(out.data.size(), 256u);
  EXPECT_EQ(runtime->last_box, (std::array<float, 4>{2.f, 3.f, 9.f, 12.f}));
  EXPECT_EQ(model.trainable(), nullptr);
  EXPECT_EQ(code_of([&] { apply_freeze_policy(model, FreezePolicy{}); }), ErrorCode::UnsupportedBackend);
}

TEST(Foundation, HeaderValidation) {
  TempDir dir("header");
  SegmenterSpec s;
  s.backend = Backend::Foundation;
  EXPECT_EQ(code_of([&] { validate(s); }), ErrorCode::ConfigError);

  ppsam::testing::write_file(dir / "bad.safetensors", std::string("\x05\0\0\0\0\0\0\0{}", 10));
  EXPECT_EQ(code_of([&] { read_safetensors_header(dir / "bad.safetensors"); }), ErrorCode::CorruptFile);

  // Tensor byte range beyond the end of the file.
  write_safetensors(dir / "short.safetensors", {{"mask_decoder.x", "F16", {4, 4}}});
  std::filesystem::resize_file(dir / "short.safetensors", std::filesystem::file_size(dir / "short.safetensors") - 2);
  EXPECT_EQ(code_of([&] { read_safetensors_header(dir / "short.safetensors"); }), ErrorCode::CorruptFile);

  write_safetensors(dir / "ok.safetensors", {{"mask_decoder.x", "F16", {4, 4}}, {"prompt_encoder.y", "F16", {3}}});
  const auto tensors = read_safetensors_header(dir / "ok.safetensors");
  ASSERT_EQ(tensors.size(), 2u);
  std::int64_t total = 0;
  for (const auto& t : tensors) total += t.element_count();
  EXPECT_EQ(total, 19);
}
