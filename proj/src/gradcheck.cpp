#include "erl/gradcheck.hpp"

#include "erl/fields.hpp"
#include "erl/fusion.hpp"
#include "erl/renderer.hpp"
#include "erl/training.hpp"

namespace erl {

namespace {

// inputs kept away from relu/abs kinks and from exact zeros of sin/cos so
// the float32-vs-double comparison is well conditioned
std::vector<float> probe(Rng& rng, size_t n, float lo, float hi) {
  std::vector<float> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

std::vector<float> probe_signed(Rng& rng, size_t n, float mag_lo, float mag_hi) {
  std::vector<float> v(n);
  for (auto& x : v) {
    float m = rng.uniform(mag_lo, mag_hi);
    x = rng.uniform(-1.0f, 1.0f) < 0.0f ? -m : m;
  }
  return v;
}

std::vector<double> dprobe(Rng& rng, size_t n, float lo, float hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

std::vector<GradCheckEntry> run_gradient_suite(uint64_t seed) {
  std::vector<GradCheckEntry> rows;
  Rng rng(seed);
  const double eps = 1e-4;

  auto check = [&](const std::string& name, auto f, Shape shape,
                   std::vector<float> x) {
    rows.push_back({name, gradient_check(f, shape, x, eps)});
  };

  auto w23 = dprobe(rng, 6, -0.8f, 0.8f);
  auto w34 = dprobe(rng, 12, -0.8f, 0.8f);
  auto b4 = dprobe(rng, 4, -0.5f, 0.5f);
  auto m23 = dprobe(rng, 6, 0.2f, 1.0f);

  check("add", [&](auto& t, auto x) {
    return sum(add(x, constant_like(t, {2, 3}, w23)));
  }, {2, 3}, probe_signed(rng, 6, 0.2f, 0.9f));
  check("sub", [&](auto& t, auto x) {
    return sum(square(sub(x, constant_like(t, {2, 3}, w23))));
  }, {2, 3}, probe_signed(rng, 6, 0.2f, 0.9f));
  check("mul_broadcast", [&](auto& t, auto x) {
    return sum(mul(x, constant_like(t, {1, 3}, {w23[0], w23[1], w23[2]})));
  }, {2, 3}, probe_signed(rng, 6, 0.2f, 0.9f));
  check("div", [&](auto& t, auto x) {
    return sum(div(constant_like(t, {2, 3}, w23), x));
  }, {2, 3}, probe(rng, 6, 0.4f, 1.2f));
  check("matmul", [&](auto& t, auto x) {
    return sum(square(matmul(x, constant_like(t, {3, 4}, w34))));
  }, {2, 3}, probe_signed(rng, 6, 0.2f, 0.9f));
  check("linear", [&](auto& t, auto x) {
    return sum(linear(constant_like(t, {2, 3}, w23), x,
                      constant_like(t, {4}, b4)));
  }, {3, 4}, probe_signed(rng, 12, 0.2f, 0.9f));
  check("concat", [&](auto& t, auto x) {
    using TT = std::decay_t<decltype(x)>;
    std::vector<TT> parts{x, constant_like(t, {2, 3}, w23)};
    return sum(square(concat(parts, 1)));
  }, {2, 3}, probe_signed(rng, 6, 0.2f, 0.9f));
  check("reshape_slice", [&](auto& t, auto x) {
    return sum(square(slice(reshape(x, {3, 2}), 0, 1, 2)));
  }, {2, 3}, probe_signed(rng, 6, 0.2f, 0.9f));
  check("sum_axis", [&](auto& t, auto x) {
    return sum(square(sum_axis(x, 0)));
  }, {2, 3}, probe_signed(rng, 6, 0.2f, 0.9f));
  check("mean", [&](auto& t, auto x) { return mean(square(x)); }, {2, 3},
        probe_signed(rng, 6, 0.2f, 0.9f));
  check("exp", [&](auto& t, auto x) { return sum(exp(x)); }, {2, 3},
        probe_signed(rng, 6, 0.2f, 0.9f));
  check("log", [&](auto& t, auto x) { return sum(log(x)); }, {2, 3},
        probe(rng, 6, 0.4f, 1.5f));
  check("sqrt", [&](auto& t, auto x) { return sum(sqrt(x)); }, {2, 3},
        probe(rng, 6, 0.4f, 1.5f));
  check("sin_cos", [&](auto& t, auto x) {
    return sum(add(sin(x), cos(x)));
  }, {2, 3}, probe_signed(rng, 6, 0.2f, 0.9f));
  check("relu", [&](auto& t, auto x) { return sum(square(relu(x))); }, {2, 3},
        probe_signed(rng, 6, 0.2f, 0.9f));
  check("softplus", [&](auto& t, auto x) { return sum(softplus(x)); }, {2, 3},
        probe_signed(rng, 6, 0.2f, 0.9f));
  check("sigmoid", [&](auto& t, auto x) { return sum(sigmoid(x)); }, {2, 3},
        probe_signed(rng, 6, 0.2f, 0.9f));
  check("tanh", [&](auto& t, auto x) { return sum(tanh(x)); }, {2, 3},
        probe_signed(rng, 6, 0.2f, 0.9f));
  check("softmax", [&](auto& t, auto x) {
    return sum(square(softmax(x, 1)));
  }, {2, 3}, probe_signed(rng, 6, 0.2f, 0.9f));
  check("broadcast_to", [&](auto& t, auto x) {
    return sum(square(broadcast_to(x, {4, 3})));
  }, {1, 3}, probe_signed(rng, 3, 0.2f, 0.9f));
  check("cumsum_exclusive", [&](auto& t, auto x) {
    return sum(square(cumsum_exclusive(x)));
  }, {2, 4}, probe_signed(rng, 8, 0.2f, 0.9f));
  check("gather_rows", [&](auto& t, auto x) {
    return sum(square(gather_rows(x, {2, 0, 2, 1})));
  }, {3, 2}, probe_signed(rng, 6, 0.2f, 0.9f));
  check("avg_pool2", [&](auto& t, auto x) {
    return sum(square(avg_pool2(x)));
  }, {4, 4, 2}, probe_signed(rng, 32, 0.2f, 0.9f));
  check("transpose2", [&](auto& t, auto x) {
    return sum(square(matmul(transpose2(x), x)));
  }, {2, 3}, probe_signed(rng, 6, 0.2f, 0.9f));
  check("sum_groups", [&](auto& t, auto x) {
    return sum(square(sum_groups(x, 2)));
  }, {4, 3}, probe_signed(rng, 12, 0.2f, 0.9f));
  check("mse", [&](auto& t, auto x) {
    return mse(x, constant_like(t, {2, 3}, w23));
  }, {2, 3}, probe_signed(rng, 6, 0.2f, 0.9f));
  auto pe_w = dprobe(rng, 36, 0.5f, 1.5f);
  check("positional_encoding", [&](auto& t, auto x) {
    return sum(mul(positional_encoding(x, 3), constant_like(t, {2, 18}, pe_w)));
  }, {2, 3}, probe_signed(rng, 6, 0.15f, 0.4f));

  check("quadrature_weights", [&](auto& t, auto x) {
    auto delta = constant_like(t, {1, 4}, {0.2, 0.3, 0.25, 0.4});
    return sum(square(quadrature_weights(x, delta)));
  }, {1, 4}, probe(rng, 4, 0.3f, 1.5f));

  auto fs_vals = dprobe(rng, 8, -0.8f, 0.8f);
  check("fuse_maps", [&](auto& t, auto x) {
    auto f_s = constant_like(t, {2, 2, 2}, fs_vals);
    auto d_h = constant_like(t, {2, 2, 1}, {0.3, 0.7, 0.4, 0.9});
    auto d_s = constant_like(t, {2, 2, 1}, {0.5, 0.2, 0.8, 0.1});
    auto m_h = constant_like(t, {2, 2, 1}, {1, 0, 1, 1});
    using T = std::decay_t<decltype(x.value()[0])>;
    auto [fg, dg] = fuse_maps(x, d_h, f_s, d_s, m_h, T(1e-3));
    return add(sum(square(fg)), sum(square(dg)));
  }, {2, 2, 2}, probe_signed(rng, 8, 0.2f, 0.9f));

  check("pixel_shuffle2", [&](auto& t, auto x) {
    return sum(square(pixel_shuffle2(x)));
  }, {2, 2, 8}, probe_signed(rng, 32, 0.2f, 0.9f));
  check("repeat_channels4", [&](auto& t, auto x) {
    return sum(square(repeat_channels4(x)));
  }, {2, 2, 2}, probe_signed(rng, 8, 0.2f, 0.9f));
  check("depthwise_conv2d", [&](auto& t, auto x) {
    return sum(square(depthwise_conv2d(x, BlurKernel::binomial4())));
  }, {4, 4, 2}, probe_signed(rng, 32, 0.2f, 0.9f));

  auto gt_small = dprobe(rng, 12, 0.1f, 0.9f);
  check("photometric_loss", [&](auto& t, auto x) {
    using T = std::decay_t<decltype(x.value()[0])>;
    auto gt = constant_like(t, {2, 2, 3}, gt_small);
    auto m_h = constant_like(t, {2, 2, 1}, {1, 0, 1, 1});
    auto m_s = constant_like(t, {2, 2, 1}, {0, 1, 1, 0});
    return photometric_loss(x, gt, m_h, m_s, T(2), T(1));
  }, {2, 2, 3}, probe(rng, 12, 0.1f, 0.9f));

  auto gt_big = dprobe(rng, 192, 0.1f, 0.9f);
  check("perceptual_proxy_loss", [&](auto& t, auto x) {
    auto gt = constant_like(t, {8, 8, 3}, gt_big);
    return perceptual_proxy_loss(x, gt, 91);
  }, {8, 8, 3}, probe(rng, 192, 0.1f, 0.9f));

  return rows;
}

}  // namespace erl
