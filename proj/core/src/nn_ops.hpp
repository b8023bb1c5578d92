#pragma once

// Dense CPU kernels for the surrogate segmenter. All tensors are CHW float
// buffers; convolutions are 3x3, stride 1, zero "same" padding.

#include <cstddef>
#include <vector>

namespace ppsam::nn {

void conv3x3_forward(const float* in, int cin, int h, int w, const float* weight, const float* bias, int cout,
                     float* out);

/// Accumulates into dweight/dbias when non-null; overwrites din when non-null.
void conv3x3_backward(const float* in, int cin, int h, int w, const float* weight, int cout, const float* dout,
                      float* dweight, float* dbias, float* din);

void relu_inplace(float* data, std::size_t n);

/// grad *= (activation > 0)
void relu_backward(const float* activation, float* grad, std::size_t n);

/// Mean over non-overlapping factor x factor blocks of a CHW tensor.
void avg_pool(const float* in, int channels, int h, int w, int factor, float* out);

/// Bilinear resampling along one axis (half-pixel centres, edge clamped).
struct LinearTaps {
  std::vector<int> lo;
  std::vector<int> hi;
  std::vector<float> frac;
};

LinearTaps make_taps(int in_size, int out_size);

/// Upsamples a single (h x w) plane to (out_h x out_w).
void upsample_bilinear(const float* in, int h, int w, const LinearTaps& ty, const LinearTaps& tx, int out_h,
                       int out_w, float* out, std::vector<float>& scratch);

/// Adjoint of upsample_bilinear: din is overwritten.
void upsample_bilinear_backward(const float* dout, int h, int w, const LinearTaps& ty, const LinearTaps& tx,
                                int out_h, int out_w, float* din, std::vector<float>& scratch);

}  // namespace ppsam::nn
