#pragma once

#include "erl/tensor.hpp"

namespace erl {

// Small normalized 2-D blur kernel applied depthwise after pixel shuffle.
struct BlurKernel {
  int size = 0;
  std::vector<float> weights;  // size*size, sums to 1

  static BlurKernel binomial4();  // [1,3,3,1] outer product / 64
  static BlurKernel identity();   // 1x1 pass-through
};

// Duplicate each channel four times consecutively: [h,w,c] -> [h,w,4c].
template <typename T>
TensorT<T> repeat_channels4(TensorT<T> a) {
  const Shape& as = a.shape();
  if (as.size() != 3)
    throw TensorError("repeat_channels4: need [h,w,c], got " + shape_str(as));
  int hw = as[0] * as[1], c = as[2];
  const auto& v = a.value();
  std::vector<T> out(static_cast<size_t>(hw) * c * 4);
  for (int p = 0; p < hw; ++p)
    for (int ch = 0; ch < c; ++ch)
      for (int g = 0; g < 4; ++g)
        out[(static_cast<size_t>(p) * c + ch) * 4 + g] =
            v[static_cast<size_t>(p) * c + ch];
  TapeT<T>& t = *a.tape();
  int aid = a.id();
  int id = t.emplace({as[0], as[1], c * 4}, std::move(out), {aid},
                     [=](TapeT<T>& tp, int self) {
    const auto& g = tp.node(self).grad;
    auto& ga = tp.grad_buf(aid);
    for (int p = 0; p < hw; ++p)
      for (int ch = 0; ch < c; ++ch)
        for (int k = 0; k < 4; ++k)
          ga[static_cast<size_t>(p) * c + ch] +=
              g[(static_cast<size_t>(p) * c + ch) * 4 + k];
  });
  return TensorT<T>(&t, id);
}

// [h,w,4c] -> [2h,2w,c]; channel c*4 + dy*2 + dx lands at spatial offset
// (dy,dx), so with repeat_channels4 input this is 2x nearest-neighbor.
template <typename T>
TensorT<T> pixel_shuffle2(TensorT<T> a) {
  const Shape& as = a.shape();
  if (as.size() != 3 || as[2] % 4 != 0)
    throw TensorError("pixel_shuffle2: need [h,w,4c], got " + shape_str(as));
  int h = as[0], w = as[1], c = as[2] / 4;
  const auto& v = a.value();
  std::vector<T> out(v.size());
  auto in_idx = [=](int i, int j, int ch, int dy, int dx) {
    return (static_cast<size_t>(i) * w + j) * c * 4 + ch * 4 + dy * 2 + dx;
  };
  auto out_idx = [=](int i, int j, int ch) {
    return (static_cast<size_t>(i) * 2 * w + j) * c + ch;
  };
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int ch = 0; ch < c; ++ch)
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            out[out_idx(2 * i + dy, 2 * j + dx, ch)] =
                v[in_idx(i, j, ch, dy, dx)];
  TapeT<T>& t = *a.tape();
  int aid = a.id();
  int id = t.emplace({2 * h, 2 * w, c}, std::move(out), {aid},
                     [=](TapeT<T>& tp, int self) {
    const auto& g = tp.node(self).grad;
    auto& ga = tp.grad_buf(aid);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        for (int ch = 0; ch < c; ++ch)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              ga[in_idx(i, j, ch, dy, dx)] +=
                  g[out_idx(2 * i + dy, 2 * j + dx, ch)];
  });
  return TensorT<T>(&t, id);
}

// Depthwise 2-D convolution with a shared kernel and mirror padding;
// output keeps the input size (pad (k-1)/2 before, k/2 after).
template <typename T>
TensorT<T> depthwise_conv2d(TensorT<T> a, const BlurKernel& kernel) {
  const Shape& as = a.shape();
  if (as.size() != 3)
    throw TensorError("depthwise_conv2d: need [h,w,c], got " + shape_str(as));
  int k = kernel.size;
  if (k < 1 || static_cast<int>(kernel.weights.size()) != k * k)
    throw TensorError("depthwise_conv2d: bad kernel");
  int h = as[0], w = as[1], c = as[2];
  int pad = (k - 1) / 2;
  auto mirror = [](int i, int n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return i;
  };
  const auto& v = a.value();
  std::vector<T> out(v.size(), T(0));
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int u = 0; u < k; ++u)
        for (int t2 = 0; t2 < k; ++t2) {
          int si = mirror(i + u - pad, h);
          int sj = mirror(j + t2 - pad, w);
          T kw = static_cast<T>(kernel.weights[u * k + t2]);
          for (int ch = 0; ch < c; ++ch)
            out[(static_cast<size_t>(i) * w + j) * c + ch] +=
                kw * v[(static_cast<size_t>(si) * w + sj) * c + ch];
        }
  TapeT<T>& t = *a.tape();
  int aid = a.id();
  BlurKernel kc = kernel;
  int id = t.emplace(as, std::move(out), {aid}, [=](TapeT<T>& tp, int self) {
    const auto& g = tp.node(self).grad;
    auto& ga = tp.grad_buf(aid);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        for (int u = 0; u < k; ++u)
          for (int t2 = 0; t2 < k; ++t2) {
            int si = mirror(i + u - pad, h);
            int sj = mirror(j + t2 - pad, w);
            T kw = static_cast<T>(kc.weights[u * k + t2]);
            for (int ch = 0; ch < c; ++ch)
              ga[(static_cast<size_t>(si) * w + sj) * c + ch] +=
                  kw * g[(static_cast<size_t>(i) * w + j) * c + ch];
          }
  });
  return TensorT<T>(&t, id);
}

// Density-weighted fusion of head and torso branches. Maps are [h,w,c]
// features with [h,w,1] densities; the head mask enters only the numerators.
template <typename T>
std::pair<TensorT<T>, TensorT<T>> fuse_maps(TensorT<T> f_h, TensorT<T> d_h,
                                            TensorT<T> f_s, TensorT<T> d_s,
                                            TensorT<T> m_h, T alpha) {
  if (alpha <= T(0)) throw TensorError("fuse_maps: alpha must be positive");
  const Shape& fs = f_h.shape();
  if (fs.size() != 3 || f_s.shape() != fs)
    throw TensorError("fuse_maps: feature shape mismatch " + shape_str(fs) +
                      " vs " + shape_str(f_s.shape()));
  Shape ds{fs[0], fs[1], 1};
  if (d_h.shape() != ds || d_s.shape() != ds || m_h.shape() != ds)
    throw TensorError("fuse_maps: density/mask must be " + shape_str(ds));
  TensorT<T> denom = add_scalar(add(d_h, d_s), alpha);
  TensorT<T> f_g = div(add(mul(mul(m_h, f_h), d_h), mul(f_s, d_s)), denom);
  TensorT<T> d_g = div(add(mul(m_h, square(d_h)), square(d_s)), denom);
  return {f_g, d_g};
}

// phi(X): 1x1 conv, relu, 1x1 conv to 4c (second layer zero-initialized so a
// fresh block is a pure 2x nearest-neighbor upsampler).
void init_upsample_block(ParamStore& store, const std::string& prefix,
                         int channels, Rng& rng);
Tensor upsample_block(Tape& tape, Tensor x, ParamStore& store,
                      const std::string& prefix, const BlurKernel& kernel);

// 1x1 conv to RGBA, sigmoid, then alpha blend over the background.
void init_compose_rgba(ParamStore& store, const std::string& prefix,
                       int channels, Rng& rng);
Tensor compose_rgba(Tape& tape, Tensor feature, Tensor background,
                    ParamStore& store, const std::string& prefix);

}  // namespace erl
