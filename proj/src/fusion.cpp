#include "erl/fusion.hpp"

namespace erl {

BlurKernel BlurKernel::binomial4() {
  static const float row[4] = {1, 3, 3, 1};
  BlurKernel k;
  k.size = 4;
  k.weights.resize(16);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) k.weights[i * 4 + j] = row[i] * row[j] / 64.0f;
  return k;
}

BlurKernel BlurKernel::identity() {
  BlurKernel k;
  k.size = 1;
  k.weights = {1.0f};
  return k;
}

void init_upsample_block(ParamStore& store, const std::string& prefix,
                         int channels, Rng& rng) {
  init_linear(store, prefix + ".phi0", channels, channels, rng);
  init_linear(store, prefix + ".phi1", channels, channels * 4, rng,
              /*zero=*/true);
}

Tensor upsample_block(Tape& tape, Tensor x, ParamStore& store,
                      const std::string& prefix, const BlurKernel& kernel) {
  const Shape& xs = x.shape();
  if (xs.size() != 3)
    throw TensorError("upsample_block: need [n,n,c], got " + shape_str(xs));
  if (xs[0] != xs[1])
    throw TensorError("upsample_block: input must be square, got " +
                      shape_str(xs));
  int n = xs[0], c = xs[2];
  Tensor flat = reshape(x, {n * n, c});
  Tensor phi = linear(relu(linear(flat, tape.leaf(store.at(prefix + ".phi0.w")),
                                  tape.leaf(store.at(prefix + ".phi0.b")))),
                      tape.leaf(store.at(prefix + ".phi1.w")),
                      tape.leaf(store.at(prefix + ".phi1.b")));
  Tensor pre = add(repeat_channels4(x), reshape(phi, {n, n, c * 4}));
  return depthwise_conv2d(pixel_shuffle2(pre), kernel);
}

void init_compose_rgba(ParamStore& store, const std::string& prefix,
                       int channels, Rng& rng) {
  init_linear(store, prefix + ".rgba", channels, 4, rng);
}

Tensor compose_rgba(Tape& tape, Tensor feature, Tensor background,
                    ParamStore& store, const std::string& prefix) {
  const Shape& fs = feature.shape();
  if (fs.size() != 3)
    throw TensorError("compose_rgba: need [h,w,c], got " + shape_str(fs));
  int h = fs[0], w = fs[1], c = fs[2];
  if (background.shape() != Shape{h, w, 3})
    throw TensorError("compose_rgba: background must be [" +
                      std::to_string(h) + "," + std::to_string(w) +
                      ",3], got " + shape_str(background.shape()));
  Tensor flat = reshape(feature, {h * w, c});
  Tensor rgba = sigmoid(linear(flat, tape.leaf(store.at(prefix + ".rgba.w")),
                               tape.leaf(store.at(prefix + ".rgba.b"))));
  Tensor rgb = slice(rgba, 1, 0, 3);
  Tensor a = slice(rgba, 1, 3, 1);
  Tensor bg = reshape(background, {h * w, 3});
  Tensor out = add(mul(a, rgb), mul(add_scalar(neg(a), 1.0f), bg));
  return reshape(out, {h, w, 3});
}

}  // namespace erl
