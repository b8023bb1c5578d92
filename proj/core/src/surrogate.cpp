#include "ppsam/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nn_ops.hpp"
#include "ppsam/error.hpp"

namespace ppsam {

namespace {

constexpr int kRgb = 3;
constexpr int kPromptRaster = 2;  // coverage, ellipse prior

std::size_t idx(GroupId g) { return static_cast<std::size_t>(g); }

// Parameter offsets inside each group's flat buffer.
struct Layout {
  // image encoder
  std::size_t conv1_w, conv1_b, conv2_w, conv2_b, hi_w, hi_b, encoder_size;
  // prompt encoder
  std::size_t emb_w, emb_b, box_scale, box_shift, prompt_size;
  // mask decoder
  std::size_t dec_w, dec_b, head_w, head_b, fuse_image, fuse_box, decoder_size;

  explicit Layout(const SurrogateArchitecture& a) {
    std::size_t o = 0;
    conv1_w = o, o += static_cast<std::size_t>(a.encoder_hidden) * kRgb * 9;
    conv1_b = o, o += a.encoder_hidden;
    conv2_w = o, o += static_cast<std::size_t>(a.encoder_channels) * a.encoder_hidden * 9;
    conv2_b = o, o += a.encoder_channels;
    hi_w = o, o += static_cast<std::size_t>(a.highres_channels) * kRgb;
    hi_b = o, o += a.highres_channels;
    encoder_size = o;

    o = 0;
    emb_w = o, o += static_cast<std::size_t>(a.prompt_channels) * kPromptRaster;
    emb_b = o, o += a.prompt_channels;
    box_scale = o++;
    box_shift = o++;
    prompt_size = o;

    o = 0;
    dec_w = o, o += static_cast<std::size_t>(a.decoder_channels) * (a.encoder_channels + a.prompt_channels) * 9;
    dec_b = o, o += a.decoder_channels;
    head_w = o, o += a.decoder_channels;
    head_b = o++;
    fuse_image = o, o += a.highres_channels;
    fuse_box = o++;
    decoder_size = o;
  }
};

}  // namespace

SurrogateArchitecture SurrogateArchitecture::for_variant(const std::string& variant) {
  if (variant == "B" || variant.empty()) return {};
  if (variant == "L") return {4, 16, 16, 8, 16, 3};
  throw Error(ErrorCode::ConfigError, "unknown surrogate variant '" + variant + "' (expected B or L)");
}

struct SurrogateSegmenter::Activations {
  int res = 0;
  int h = 0;
  int w = 0;
  std::vector<float> image;    // normalized input, 3 x res x res
  std::vector<float> pooled;   // 3 x h x w
  std::vector<float> enc1;     // post-ReLU
  std::vector<float> enc2;     // post-ReLU image embedding
  std::vector<float> raster;   // coverage, ellipse prior
  std::vector<float> concat;   // [image embedding, prompt embedding]
  std::vector<float> dec;      // post-ReLU
  std::vector<float> low_logits;
  std::vector<float> highres;  // highres_channels x res x res
  std::vector<float> box_hi;   // res x res indicator
  std::vector<float> logits;   // res x res
  nn::LinearTaps taps;
  std::vector<float> scratch;
};

SurrogateSegmenter::SurrogateSegmenter(SegmenterSpec spec) : spec_(std::move(spec)) {
  spec_.backend = Backend::Surrogate;
  validate(spec_);
  arch_ = SurrogateArchitecture::for_variant(spec_.variant);
  if (spec_.input_resolution % arch_.stride != 0) {
    throw Error(ErrorCode::ConfigError, "surrogate resolution " + std::to_string(spec_.input_resolution) +
                                            " is not divisible by stride " + std::to_string(arch_.stride));
  }
  const Layout layout(arch_);
  params_[idx(GroupId::ImageEncoder)].assign(layout.encoder_size, 0.0f);
  params_[idx(GroupId::PromptEncoder)].assign(layout.prompt_size, 0.0f);
  params_[idx(GroupId::MaskDecoder)].assign(layout.decoder_size, 0.0f);
  for (std::size_t g = 0; g < 3; ++g) grads_[g].assign(params_[g].size(), 0.0f);
  initialise();
}

SurrogateSegmenter::~SurrogateSegmenter() = default;

void SurrogateSegmenter::initialise() {
  const Layout L(arch_);
  std::mt19937_64 rng(spec_.seed);
  auto fill_normal = [&](std::vector<float>& buf, std::size_t offset, std::size_t n, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (std::size_t i = 0; i < n; ++i) buf[offset + i] = static_cast<float>(dist(rng));
  };
  auto& enc = params_[idx(GroupId::ImageEncoder)];
  auto& pro = params_[idx(GroupId::PromptEncoder)];
  auto& dec = params_[idx(GroupId::MaskDecoder)];
  const auto& a = arch_;

  fill_normal(enc, L.conv1_w, L.conv1_b - L.conv1_w, std::sqrt(2.0 / (kRgb * 9)));
  fill_normal(enc, L.conv2_w, L.conv2_b - L.conv2_w, std::sqrt(2.0 / (a.encoder_hidden * 9)));
  fill_normal(enc, L.hi_w, L.hi_b - L.hi_w, std::sqrt(1.0 / kRgb));

  fill_normal(pro, L.emb_w, L.emb_b - L.emb_w, std::sqrt(1.0 / kPromptRaster));
  pro[L.box_scale] = 1.0f;
  pro[L.box_shift] = 0.0f;

  fill_normal(dec, L.dec_w, L.dec_b - L.dec_w, std::sqrt(2.0 / ((a.encoder_channels + a.prompt_channels) * 9)));
  fill_normal(dec, L.head_w, L.head_b - L.head_w, std::sqrt(1.0 / a.decoder_channels));
  // Full-resolution fusion starts as a plain sum so a frozen decoder still
  // routes gradients to both encoders.
  for (int k = 0; k < a.highres_channels; ++k) dec[L.fuse_image + k] = 1.0f / static_cast<float>(a.highres_channels);
  dec[L.fuse_box] = 1.0f;
}

Normalization SurrogateSegmenter::normalization() const { return {{127.5f, 127.5f, 127.5f}, {64.0f, 64.0f, 64.0f}}; }

std::size_t SurrogateSegmenter::parameter_count() const {
  return params_[0].size() + params_[1].size() + params_[2].size();
}

std::vector<ParameterGroup> SurrogateSegmenter::parameter_groups() const {
  std::vector<ParameterGroup> out;
  for (auto g : kAllGroups) out.push_back({g, params_[idx(g)].size(), trainable_[idx(g)]});
  return out;
}

void SurrogateSegmenter::set_trainable(GroupId group, bool trainable) { trainable_[idx(group)] = trainable; }
bool SurrogateSegmenter::is_trainable(GroupId group) const { return trainable_[idx(group)]; }
std::span<float> SurrogateSegmenter::parameters(GroupId group) { return params_[idx(group)]; }
std::span<const float> SurrogateSegmenter::parameters(GroupId group) const { return params_[idx(group)]; }
std::span<float> SurrogateSegmenter::gradients(GroupId group) { return grads_[idx(group)]; }

void SurrogateSegmenter::zero_grad() {
  for (auto& g : grads_) std::fill(g.begin(), g.end(), 0.0f);
}

void SurrogateSegmenter::forward(const ImageTensor& image, const BoundingBox& prompt, Activations& act) const {
  const int res = spec_.input_resolution;
  check_prompt(prompt, spec_.resolution());
  if (image.channels != kRgb || image.height != res || image.width != res) {
    throw Error(ErrorCode::ShapeMismatch, "surrogate expects a 3x" + std::to_string(res) + "x" + std::to_string(res) +
                                              " image, got " + std::to_string(image.channels) + "x" +
                                              std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  const Layout L(arch_);
  const auto& a = arch_;
  const auto& enc = params_[idx(GroupId::ImageEncoder)];
  const auto& pro = params_[idx(GroupId::PromptEncoder)];
  const auto& dec = params_[idx(GroupId::MaskDecoder)];

  const int s = a.stride;
  const int h = res / s;
  const int w = res / s;
  const std::size_t low = static_cast<std::size_t>(h) * w;
  const std::size_t full = static_cast<std::size_t>(res) * res;
  if (act.res != res || act.h != h) {
    act.res = res;
    act.h = h;
    act.w = w;
    act.taps = nn::make_taps(h, res);
  }
  act.image = image.data;

  // Image encoder.
  act.pooled.resize(kRgb * low);
  nn::avg_pool(image.data.data(), kRgb, res, res, s, act.pooled.data());
  act.enc1.resize(a.encoder_hidden * low);
  nn::conv3x3_forward(act.pooled.data(), kRgb, h, w, &enc[L.conv1_w], &enc[L.conv1_b], a.encoder_hidden,
                      act.enc1.data());
  nn::relu_inplace(act.enc1.data(), act.enc1.size());
  act.concat.resize((a.encoder_channels + a.prompt_channels) * low);
  nn::conv3x3_forward(act.enc1.data(), a.encoder_hidden, h, w, &enc[L.conv2_w], &enc[L.conv2_b], a.encoder_channels,
                      act.concat.data());
  nn::relu_inplace(act.concat.data(), a.encoder_channels * low);
  act.enc2.assign(act.concat.begin(), act.concat.begin() + a.encoder_channels * low);

  act.highres.resize(a.highres_channels * full);
  for (int k = 0; k < a.highres_channels; ++k) {
    float* dst = act.highres.data() + k * full;
    const float w0 = enc[L.hi_w + k * kRgb + 0];
    const float w1 = enc[L.hi_w + k * kRgb + 1];
    const float w2 = enc[L.hi_w + k * kRgb + 2];
    const float b = enc[L.hi_b + k];
    const float* r = image.data.data();
    const float* g = r + full;
    const float* bl = g + full;
    for (std::size_t i = 0; i < full; ++i) dst[i] = w0 * r[i] + w1 * g[i] + w2 * bl[i] + b;
  }

  // Prompt encoder: rasterise at feature resolution.
  act.raster.resize(kPromptRaster * low);
  std::vector<float> cov_x(w), cov_y(h);
  for (int j = 0; j < w; ++j) {
    const int lo = std::max(j * s, prompt.x_min);
    const int hi = std::min((j + 1) * s, prompt.x_max);
    cov_x[j] = hi > lo ? static_cast<float>(hi - lo) / s : 0.0f;
  }
  for (int i = 0; i < h; ++i) {
    const int lo = std::max(i * s, prompt.y_min);
    const int hi = std::min((i + 1) * s, prompt.y_max);
    cov_y[i] = hi > lo ? static_cast<float>(hi - lo) / s : 0.0f;
  }
  const double cx = 0.5 * (prompt.x_min + prompt.x_max);
  const double cy = 0.5 * (prompt.y_min + prompt.y_max);
  const double rx = 0.5 * prompt.width();
  const double ry = 0.5 * prompt.height();
  for (int i = 0; i < h; ++i) {
    const double v = ((i + 0.5) * s - cy) / ry;
    for (int j = 0; j < w; ++j) {
      const double u = ((j + 0.5) * s - cx) / rx;
      act.raster[i * w + j] = cov_y[i] * cov_x[j];
      act.raster[low + i * w + j] = static_cast<float>(std::max(0.0, 1.0 - u * u - v * v));
    }
  }
  float* prompt_emb = act.concat.data() + a.encoder_channels * low;
  for (int k = 0; k < a.prompt_channels; ++k) {
    const float w0 = pro[L.emb_w + k * kPromptRaster];
    const float w1 = pro[L.emb_w + k * kPromptRaster + 1];
    const float b = pro[L.emb_b + k];
    float* dst = prompt_emb + k * low;
    for (std::size_t i = 0; i < low; ++i) dst[i] = w0 * act.raster[i] + w1 * act.raster[low + i] + b;
  }
  act.box_hi.assign(full, 0.0f);
  for (int y = prompt.y_min; y < prompt.y_max; ++y) {
    std::fill_n(act.box_hi.begin() + static_cast<std::ptrdiff_t>(y) * res + prompt.x_min, prompt.width(), 1.0f);
  }

  // Mask decoder.
  act.dec.resize(a.decoder_channels * low);
  nn::conv3x3_forward(act.concat.data(), a.encoder_channels + a.prompt_channels, h, w, &dec[L.dec_w], &dec[L.dec_b],
                      a.decoder_channels, act.dec.data());
  nn::relu_inplace(act.dec.data(), act.dec.size());
  act.low_logits.assign(low, dec[L.head_b]);
  for (int d = 0; d < a.decoder_channels; ++d) {
    const float hw = dec[L.head_w + d];
    const float* src = act.dec.data() + d * low;
    for (std::size_t i = 0; i < low; ++i) act.low_logits[i] += hw * src[i];
  }
  act.logits.resize(full);
  nn::upsample_bilinear(act.low_logits.data(), h, w, act.taps, act.taps, res, res, act.logits.data(), act.scratch);
  const float box_gain = dec[L.fuse_box] * pro[L.box_scale];
  const float box_bias = dec[L.fuse_box] * pro[L.box_shift];
  for (std::size_t i = 0; i < full; ++i) act.logits[i] += box_gain * act.box_hi[i] + box_bias;
  for (int k = 0; k < a.highres_channels; ++k) {
    const float u = dec[L.fuse_image + k];
    const float* src = act.highres.data() + k * full;
    for (std::size_t i = 0; i < full; ++i) act.logits[i] += u * src[i];
  }
}

ProbabilityMap SurrogateSegmenter::predict(const ImageTensor& image, const BoundingBox& prompt) const {
  Activations act;
  forward(image, prompt, act);
  ProbabilityMap out{act.res, act.res, std::vector<float>(act.logits.size())};
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = 1.0f / (1.0f + std::exp(-act.logits[i]));
  return out;
}

std::vector<float> SurrogateSegmenter::forward_train(const ImageTensor& image, const BoundingBox& prompt) {
  if (!cache_) cache_ = std::make_unique<Activations>();
  forward(image, prompt, *cache_);
  return cache_->logits;
}

void SurrogateSegmenter::backward(std::span<const float> d_logits) {
  if (!cache_ || cache_->logits.empty()) throw Error(ErrorCode::ConfigError, "backward() without forward_train()");
  auto& act = *cache_;
  const std::size_t full = static_cast<std::size_t>(act.res) * act.res;
  if (d_logits.size() != full) throw Error(ErrorCode::ShapeMismatch, "gradient does not match logits");

  const Layout L(arch_);
  const auto& a = arch_;
  const bool train_enc = trainable_[idx(GroupId::ImageEncoder)];
  const bool train_pro = trainable_[idx(GroupId::PromptEncoder)];
  const bool train_dec = trainable_[idx(GroupId::MaskDecoder)];
  const auto& enc = params_[idx(GroupId::ImageEncoder)];
  const auto& pro = params_[idx(GroupId::PromptEncoder)];
  const auto& dec = params_[idx(GroupId::MaskDecoder)];
  auto& g_enc = grads_[idx(GroupId::ImageEncoder)];
  auto& g_pro = grads_[idx(GroupId::PromptEncoder)];
  auto& g_dec = grads_[idx(GroupId::MaskDecoder)];
  const int h = act.h;
  const int w = act.w;
  const std::size_t low = static_cast<std::size_t>(h) * w;
  const float* g = d_logits.data();

  // Full-resolution fusion.
  double sum_g = 0.0;
  double sum_g_box = 0.0;
  for (std::size_t i = 0; i < full; ++i) {
    sum_g += g[i];
    sum_g_box += g[i] * act.box_hi[i];
  }
  if (train_dec) {
    g_dec[L.fuse_box] += static_cast<float>(pro[L.box_scale] * sum_g_box + pro[L.box_shift] * sum_g);
  }
  if (train_pro) {
    g_pro[L.box_scale] += static_cast<float>(dec[L.fuse_box] * sum_g_box);
    g_pro[L.box_shift] += static_cast<float>(dec[L.fuse_box] * sum_g);
  }
  for (int k = 0; k < a.highres_channels; ++k) {
    const float* src = act.highres.data() + k * full;
    if (train_dec) {
      double acc = 0.0;
      for (std::size_t i = 0; i < full; ++i) acc += g[i] * src[i];
      g_dec[L.fuse_image + k] += static_cast<float>(acc);
    }
    if (train_enc) {
      const float u = dec[L.fuse_image + k];
      double acc_b = 0.0;
      double acc_w[kRgb] = {0.0, 0.0, 0.0};
      for (int c = 0; c < kRgb; ++c) {
        const float* img = act.image.data() + c * full;
        double acc = 0.0;
        for (std::size_t i = 0; i < full; ++i) acc += g[i] * img[i];
        acc_w[c] = acc;
      }
      acc_b = sum_g;
      for (int c = 0; c < kRgb; ++c) g_enc[L.hi_w + k * kRgb + c] += static_cast<float>(u * acc_w[c]);
      g_enc[L.hi_b + k] += static_cast<float>(u * acc_b);
    }
  }
  if (!train_dec && !train_pro && !train_enc) return;

  // Low-resolution path.
  std::vector<float> d_low(low);
  nn::upsample_bilinear_backward(g, h, w, act.taps, act.taps, act.res, act.res, d_low.data(), act.scratch);
  if (train_dec) {
    double acc_b = 0.0;
    for (std::size_t i = 0; i < low; ++i) acc_b += d_low[i];
    g_dec[L.head_b] += static_cast<float>(acc_b);
  }
  std::vector<float> d_dec(a.decoder_channels * low);
  for (int d = 0; d < a.decoder_channels; ++d) {
    const float* src = act.dec.data() + d * low;
    float* dst = d_dec.data() + d * low;
    const float hw = dec[L.head_w + d];
    double acc = 0.0;
    for (std::size_t i = 0; i < low; ++i) {
      acc += d_low[i] * src[i];
      dst[i] = src[i] > 0.0f ? hw * d_low[i] : 0.0f;
    }
    if (train_dec) g_dec[L.head_w + d] += static_cast<float>(acc);
  }
  const int cat_channels = a.encoder_channels + a.prompt_channels;
  const bool need_input_grad = train_enc || train_pro;
  std::vector<float> d_cat(need_input_grad ? cat_channels * low : 0);
  nn::conv3x3_backward(act.concat.data(), cat_channels, h, w, &dec[L.dec_w], a.decoder_channels, d_dec.data(),
                       train_dec ? &g_dec[L.dec_w] : nullptr, train_dec ? &g_dec[L.dec_b] : nullptr,
                       need_input_grad ? d_cat.data() : nullptr);
  if (!need_input_grad) return;

  if (train_pro) {
    const float* d_prompt = d_cat.data() + a.encoder_channels * low;
    for (int k = 0; k < a.prompt_channels; ++k) {
      const float* gk = d_prompt + k * low;
      double a0 = 0.0, a1 = 0.0, ab = 0.0;
      for (std::size_t i = 0; i < low; ++i) {
        a0 += gk[i] * act.raster[i];
        a1 += gk[i] * act.raster[low + i];
        ab += gk[i];
      }
      g_pro[L.emb_w + k * kPromptRaster] += static_cast<float>(a0);
      g_pro[L.emb_w + k * kPromptRaster + 1] += static_cast<float>(a1);
      g_pro[L.emb_b + k] += static_cast<float>(ab);
    }
  }
  if (!train_enc) return;

  float* d_enc2 = d_cat.data();
  nn::relu_backward(act.enc2.data(), d_enc2, a.encoder_channels * low);
  std::vector<float> d_enc1(a.encoder_hidden * low);
  nn::conv3x3_backward(act.enc1.data(), a.encoder_hidden, h, w, &enc[L.conv2_w], a.encoder_channels, d_enc2,
                       &g_enc[L.conv2_w], &g_enc[L.conv2_b], d_enc1.data());
  nn::relu_backward(act.enc1.data(), d_enc1.data(), d_enc1.size());
  nn::conv3x3_backward(act.pooled.data(), kRgb, h, w, &enc[L.conv1_w], a.encoder_hidden, d_enc1.data(),
                       &g_enc[L.conv1_w], &g_enc[L.conv1_b], nullptr);
}

}  // namespace ppsam
