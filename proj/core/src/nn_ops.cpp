#include "nn_ops.hpp"

#include <algorithm>
#include <cmath>

namespace ppsam::nn {

namespace {

struct Span1D {
  int begin;
  int end;
};

// Output positions o where o + d stays inside [0, n).
Span1D valid_range(int n, int d) { return {std::max(0, -d), std::min(n, n - d)}; }

}  // namespace

void conv3x3_forward(const float* in, int cin, int h, int w, const float* weight, const float* bias, int cout,
                     float* out) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int co = 0; co < cout; ++co) {
    float* o = out + co * plane;
    std::fill(o, o + plane, bias ? bias[co] : 0.0f);
    for (int ci = 0; ci < cin; ++ci) {
      const float* src = in + ci * plane;
      const float* k = weight + (static_cast<std::size_t>(co) * cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const auto ys = valid_range(h, dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const auto xs = valid_range(w, dx);
          const float kv = k[ky * 3 + kx];
          for (int y = ys.begin; y < ys.end; ++y) {
            float* orow = o + static_cast<std::size_t>(y) * w;
            const float* irow = src + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = xs.begin; x < xs.end; ++x) orow[x] += kv * irow[x];
          }
        }
      }
    }
  }
}

void conv3x3_backward(const float* in, int cin, int h, int w, const float* weight, int cout, const float* dout,
                      float* dweight, float* dbias, float* din) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  if (din) std::fill(din, din + cin * plane, 0.0f);
  for (int co = 0; co < cout; ++co) {
    const float* g = dout + co * plane;
    if (dbias) {
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += g[i];
      dbias[co] += static_cast<float>(acc);
    }
    for (int ci = 0; ci < cin; ++ci) {
      const float* src = in + ci * plane;
      float* dsrc = din ? din + ci * plane : nullptr;
      const std::size_t kofs = (static_cast<std::size_t>(co) * cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const auto ys = valid_range(h, dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const auto xs = valid_range(w, dx);
          const float kv = weight[kofs + ky * 3 + kx];
          float acc = 0.0f;
          for (int y = ys.begin; y < ys.end; ++y) {
            const float* grow = g + static_cast<std::size_t>(y) * w;
            const std::size_t irow = static_cast<std::size_t>(y + dy) * w + dx;
            if (dweight) {
              const float* srow = src + irow;
              for (int x = xs.begin; x < xs.end; ++x) acc += grow[x] * srow[x];
            }
            if (dsrc) {
              float* drow = dsrc + irow;
              for (int x = xs.begin; x < xs.end; ++x) drow[x] += kv * grow[x];
            }
          }
          if (dweight) dweight[kofs + ky * 3 + kx] += acc;
        }
      }
    }
  }
}

void relu_inplace(float* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) data[i] = std::max(data[i], 0.0f);
}

void relu_backward(const float* activation, float* grad, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) grad[i] = activation[i] > 0.0f ? grad[i] : 0.0f;
}

void avg_pool(const float* in, int channels, int h, int w, int factor, float* out) {
  const int oh = h / factor;
  const int ow = w / factor;
  const float scale = 1.0f / static_cast<float>(factor * factor);
  for (int c = 0; c < channels; ++c) {
    const float* src = in + static_cast<std::size_t>(c) * h * w;
    float* dst = out + static_cast<std::size_t>(c) * oh * ow;
    std::fill(dst, dst + static_cast<std::size_t>(oh) * ow, 0.0f);
    for (int y = 0; y < oh * factor; ++y) {
      float* drow = dst + static_cast<std::size_t>(y / factor) * ow;
      const float* srow = src + static_cast<std::size_t>(y) * w;
      for (int x = 0; x < ow * factor; ++x) drow[x / factor] += srow[x];
    }
    for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) dst[i] *= scale;
  }
}

LinearTaps make_taps(int in_size, int out_size) {
  LinearTaps taps;
  taps.lo.resize(out_size);
  taps.hi.resize(out_size);
  taps.frac.resize(out_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int lo = static_cast<int>(std::floor(src));
    if (lo >= in_size - 1) {
      lo = in_size - 1;
      src = lo;
    }
    taps.lo[o] = lo;
    taps.hi[o] = std::min(lo + 1, in_size - 1);
    taps.frac[o] = static_cast<float>(src - lo);
  }
  return taps;
}

void upsample_bilinear(const float* in, int h, int w, const LinearTaps& ty, const LinearTaps& tx, int out_h,
                       int out_w, float* out, std::vector<float>& scratch) {
  scratch.resize(static_cast<std::size_t>(h) * out_w);
  for (int y = 0; y < h; ++y) {
    const float* row = in + static_cast<std::size_t>(y) * w;
    float* t = scratch.data() + static_cast<std::size_t>(y) * out_w;
    for (int x = 0; x < out_w; ++x) t[x] = row[tx.lo[x]] + tx.frac[x] * (row[tx.hi[x]] - row[tx.lo[x]]);
  }
  for (int y = 0; y < out_h; ++y) {
    const float* a = scratch.data() + static_cast<std::size_t>(ty.lo[y]) * out_w;
    const float* b = scratch.data() + static_cast<std::size_t>(ty.hi[y]) * out_w;
    const float f = ty.frac[y];
    float* o = out + static_cast<std::size_t>(y) * out_w;
    for (int x = 0; x < out_w; ++x) o[x] = a[x] + f * (b[x] - a[x]);
  }
}

void upsample_bilinear_backward(const float* dout, int h, int w, const LinearTaps& ty, const LinearTaps& tx,
                                int out_h, int out_w, float* din, std::vector<float>& scratch) {
  scratch.assign(static_cast<std::size_t>(h) * out_w, 0.0f);
  for (int y = 0; y < out_h; ++y) {
    float* a = scratch.data() + static_cast<std::size_t>(ty.lo[y]) * out_w;
    float* b = scratch.data() + static_cast<std::size_t>(ty.hi[y]) * out_w;
    const float f = ty.frac[y];
    const float* g = dout + static_cast<std::size_t>(y) * out_w;
    for (int x = 0; x < out_w; ++x) {
      a[x] += (1.0f - f) * g[x];
      b[x] += f * g[x];
    }
  }
  std::fill(din, din + static_cast<std::size_t>(h) * w, 0.0f);
  for (int y = 0; y < h; ++y) {
    const float* t = scratch.data() + static_cast<std::size_t>(y) * out_w;
    float* row = din + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < out_w; ++x) {
      row[tx.lo[x]] += (1.0f - tx.frac[x]) * t[x];
      row[tx.hi[x]] += tx.frac[x] * t[x];
    }
  }
}

}  // namespace ppsam::nn
