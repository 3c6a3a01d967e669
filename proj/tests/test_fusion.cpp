#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "erl/fusion.hpp"

using namespace erl;

namespace {

std::vector<float> randv(Rng& rng, size_t n, float lo = -1.0f, float hi = 1.0f) {
  std::vector<float> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("fusion of all-zero inputs is zero") {
  Tape t;
  Tensor z3 = t.constant({2, 2, 3}, std::vector<float>(12, 0.0f));
  Tensor z1 = t.constant({2, 2, 1}, std::vector<float>(4, 0.0f));
  auto [fg, dg] = fuse_maps(z3, z1, z3, z1, z1, 1e-6f);
  for (float v : fg.value()) CHECK(v == 0.0f);
  for (float v : dg.value()) CHECK(v == 0.0f);
}

TEST_CASE("fusion matches the closed-form example") {
  Tape t;
  Tensor fh = t.constant({1, 1, 1}, {2.0f});
  Tensor dh = t.constant({1, 1, 1}, {1.0f});
  Tensor fs = t.constant({1, 1, 1}, {4.0f});
  Tensor ds = t.constant({1, 1, 1}, {3.0f});
  Tensor mh = t.constant({1, 1, 1}, {1.0f});
  auto [fg, dg] = fuse_maps(fh, dh, fs, ds, mh, 1e-8f);
  CHECK(fg.scalar() == doctest::Approx(3.5f).epsilon(1e-6));
  CHECK(dg.scalar() == doctest::Approx(2.5f).epsilon(1e-6));
}

TEST_CASE("single-branch limit returns the head feature") {
  Tape t;
  Tensor fh = t.constant({1, 1, 2}, {0.7f, -0.3f});
  Tensor dh = t.constant({1, 1, 1}, {1.0f});
  Tensor fs = t.constant({1, 1, 2}, {100.0f, -50.0f});
  Tensor ds = t.constant({1, 1, 1}, {0.0f});
  Tensor mh = t.constant({1, 1, 1}, {1.0f});
  auto [fg, dg] = fuse_maps(fh, dh, fs, ds, mh, 1e-8f);
  CHECK(std::abs(fg.value()[0] - 0.7f) < 1e-7f);
  CHECK(std::abs(fg.value()[1] + 0.3f) < 1e-7f);
}

TEST_CASE("fusion is 1-homogeneous in the features") {
  Rng rng(1);
  Tape t;
  const float c = 2.75f;
  auto fh = randv(rng, 4 * 4 * 3);
  auto fs = randv(rng, 4 * 4 * 3);
  auto dh = randv(rng, 16, 0.0f, 1.0f);
  auto ds = randv(rng, 16, 0.0f, 1.0f);
  std::vector<float> mh(16);
  for (auto& v : mh) v = rng.uniform_int(2) ? 1.0f : 0.0f;
  auto scaled = [&](const std::vector<float>& v) {
    std::vector<float> s(v.size());
    for (size_t i = 0; i < v.size(); ++i) s[i] = c * v[i];
    return s;
  };
  auto [fg1, dg1] = fuse_maps(t.constant({4, 4, 3}, fh), t.constant({4, 4, 1}, dh),
                              t.constant({4, 4, 3}, fs), t.constant({4, 4, 1}, ds),
                              t.constant({4, 4, 1}, mh), 1e-6f);
  auto [fg2, dg2] = fuse_maps(t.constant({4, 4, 3}, scaled(fh)), t.constant({4, 4, 1}, dh),
                              t.constant({4, 4, 3}, scaled(fs)), t.constant({4, 4, 1}, ds),
                              t.constant({4, 4, 1}, mh), 1e-6f);
  for (size_t i = 0; i < fg1.value().size(); ++i)
    CHECK(fg2.value()[i] == doctest::Approx(c * fg1.value()[i]).epsilon(1e-5));
  // densities unaffected by feature scaling
  for (size_t i = 0; i < dg1.value().size(); ++i)
    CHECK(dg2.value()[i] == dg1.value()[i]);
}

TEST_CASE("fusion rejects bad alpha and mismatched shapes") {
  Tape t;
  Tensor f = t.constant({2, 2, 3}, std::vector<float>(12, 1.0f));
  Tensor f_small = t.constant({2, 1, 3}, std::vector<float>(6, 1.0f));
  Tensor d = t.constant({2, 2, 1}, std::vector<float>(4, 0.5f));
  CHECK_THROWS_AS(fuse_maps(f, d, f, d, d, 0.0f), TensorError);
  CHECK_THROWS_AS(fuse_maps(f, d, f_small, d, d, 1e-6f), TensorError);
}

TEST_CASE("pixel shuffle permutes a 1x1x4 tile into a 2x2 block") {
  Tape t;
  Tensor x = t.constant({1, 1, 4}, {1.0f, 2.0f, 3.0f, 5.0f});
  Tensor y = pixel_shuffle2(x);
  CHECK(y.shape() == Shape{2, 2, 1});
  CHECK(y.value() == std::vector<float>{1.0f, 2.0f, 3.0f, 5.0f});
}

TEST_CASE("pixel shuffle preserves the multiset of values") {
  Rng rng(2);
  Tape t;
  auto v = randv(rng, 3 * 3 * 8);
  Tensor y = pixel_shuffle2(t.constant({3, 3, 8}, v));
  auto out = y.value();
  std::sort(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  CHECK(v == out);
}

TEST_CASE("fresh upsample block is exact 2x nearest-neighbor with identity kernel") {
  Rng rng(3);
  int n = 5, c = 3;
  ParamStore store;
  init_upsample_block(store, "up0", c, rng);
  Tape t;
  auto v = randv(rng, static_cast<size_t>(n) * n * c);
  Tensor x = t.constant({n, n, c}, v);
  Tensor y = upsample_block(t, x, store, "up0", BlurKernel::identity());
  REQUIRE(y.shape() == Shape{2 * n, 2 * n, c});
  for (int i = 0; i < 2 * n; ++i)
    for (int j = 0; j < 2 * n; ++j)
      for (int ch = 0; ch < c; ++ch)
        REQUIRE(y.value()[(static_cast<size_t>(i) * 2 * n + j) * c + ch] ==
                v[(static_cast<size_t>(i / 2) * n + j / 2) * c + ch]);
}

TEST_CASE("blur kernel is normalized and preserves constants") {
  BlurKernel k = BlurKernel::binomial4();
  float s = 0.0f;
  for (float w : k.weights) s += w;
  CHECK(s == doctest::Approx(1.0f).epsilon(1e-6));
  CHECK(k.weights[5] == doctest::Approx(9.0f / 64.0f).epsilon(1e-6));
  Tape t;
  Tensor x = t.constant({4, 4, 2}, std::vector<float>(32, 0.75f));
  Tensor y = depthwise_conv2d(x, k);
  for (float v : y.value()) CHECK(v == doctest::Approx(0.75f).epsilon(1e-5));
}

TEST_CASE("three stacked blocks scale the side by eight") {
  Rng rng(4);
  int c = 2;
  ParamStore store;
  for (int b = 0; b < 3; ++b)
    init_upsample_block(store, "up" + std::to_string(b), c, rng);
  Tape t;
  Tensor x = t.constant({8, 8, c}, randv(rng, 8 * 8 * c));
  BlurKernel k = BlurKernel::binomial4();
  for (int b = 0; b < 3; ++b)
    x = upsample_block(t, x, store, "up" + std::to_string(b), k);
  CHECK(x.shape() == Shape{64, 64, c});
}

TEST_CASE("full-scale block maps 64x64x256 to 128x128x256") {
  Rng rng(5);
  ParamStore store;
  init_upsample_block(store, "up0", 256, rng);
  Tape t;
  Tensor x = t.constant({64, 64, 256}, std::vector<float>(64 * 64 * 256, 0.1f));
  Tensor y = upsample_block(t, x, store, "up0", BlurKernel::binomial4());
  CHECK(y.shape() == Shape{128, 128, 256});
}

TEST_CASE("upsample block rejects non-square input") {
  Rng rng(6);
  ParamStore store;
  init_upsample_block(store, "up0", 2, rng);
  Tape t;
  Tensor x = t.constant({2, 3, 2}, std::vector<float>(12, 0.0f));
  CHECK_THROWS_AS(upsample_block(t, x, store, "up0", BlurKernel::identity()),
                  TensorError);
}

TEST_CASE("shuffle plus blur gradients match finite differences") {
  BlurKernel k = BlurKernel::binomial4();
  Rng rng(7);
  auto x0 = randv(rng, 2 * 2 * 4);
  double err = gradient_check(
      [&](auto& t, auto x) {
        using T = std::decay_t<decltype(x.value()[0])>;
        std::vector<T> wv(16);
        for (int i = 0; i < 16; ++i) wv[i] = T(i % 5) * T(0.37) - T(0.8);
        auto y = depthwise_conv2d(pixel_shuffle2(x), k);
        auto w = t.constant({4, 4, 1}, wv);
        return sum(mul(y, w));
      },
      {2, 2, 4}, x0, 1e-3);
  CHECK(err < 1e-4);
}

TEST_CASE("fusion gradients match finite differences") {
  Rng rng(8);
  auto fh0 = randv(rng, 2 * 2 * 2);
  auto dh0 = randv(rng, 4, 0.1f, 0.9f);
  auto fs0 = randv(rng, 2 * 2 * 2);
  auto ds0 = randv(rng, 4, 0.1f, 0.9f);
  double err = gradient_check(
      [&](auto& t, auto dh) {
        using T = std::decay_t<decltype(dh.value()[0])>;
        auto cv = [&](Shape s, const std::vector<float>& v) {
          std::vector<T> d(v.begin(), v.end());
          return t.constant(std::move(s), std::move(d));
        };
        auto [fg, dg] = fuse_maps(cv({2, 2, 2}, fh0), dh, cv({2, 2, 2}, fs0),
                                  cv({2, 2, 1}, ds0),
                                  cv({2, 2, 1}, {1, 0, 1, 1}), T(1e-3));
        return add(sum(fg), sum(dg));
      },
      {2, 2, 1}, dh0, 1e-4);
  CHECK(err < 1e-4);
}

TEST_CASE("rgba composition blends foreground over background") {
  int c = 4;
  ParamStore store;
  Rng rng(9);
  init_compose_rgba(store, "img", c, rng);
  // zero weights, controlled biases
  std::fill(store.at("img.rgba.w").value.begin(),
            store.at("img.rgba.w").value.end(), 0.0f);
  auto set_bias = [&](float r, float a) {
    auto& b = store.at("img.rgba.b").value;
    b[0] = b[1] = b[2] = r;
    b[3] = a;
  };
  Tape t;
  Tensor feat = t.constant({2, 2, c}, std::vector<float>(16, 0.3f));
  Tensor bg = t.constant({2, 2, 3}, randv(rng, 12, 0.0f, 1.0f));

  set_bias(40.0f, 40.0f);  // a = 1, rgb = 1
  Tensor opaque = compose_rgba(t, feat, bg, store, "img");
  for (float v : opaque.value()) CHECK(v == doctest::Approx(1.0f).epsilon(1e-5));

  set_bias(40.0f, -40.0f);  // a = 0 -> pure background
  Tensor transparent = compose_rgba(t, feat, bg, store, "img");
  for (size_t i = 0; i < bg.value().size(); ++i)
    CHECK(transparent.value()[i] == doctest::Approx(bg.value()[i]).epsilon(1e-5));

  set_bias(40.0f, 0.0f);  // a = 0.5, rgb = 1 over zero background
  Tensor zero_bg = t.constant({2, 2, 3}, std::vector<float>(12, 0.0f));
  Tensor half = compose_rgba(t, feat, zero_bg, store, "img");
  for (float v : half.value()) CHECK(v == doctest::Approx(0.5f).epsilon(1e-5));
}

TEST_CASE("composed image stays in [0,1] for unit-range backgrounds") {
  ParamStore store;
  Rng rng(10);
  init_compose_rgba(store, "img", 6, rng);
  Tape t;
  Tensor feat = t.constant({3, 3, 6}, randv(rng, 54, -3.0f, 3.0f));
  Tensor bg = t.constant({3, 3, 3}, randv(rng, 27, 0.0f, 1.0f));
  Tensor out = compose_rgba(t, feat, bg, store, "img");
  for (float v : out.value()) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
}

TEST_CASE("rgba composition rejects mismatched background") {
  ParamStore store;
  Rng rng(11);
  init_compose_rgba(store, "img", 4, rng);
  Tape t;
  Tensor feat = t.constant({2, 2, 4}, std::vector<float>(16, 0.0f));
  Tensor bg = t.constant({3, 2, 3}, std::vector<float>(18, 0.0f));
  CHECK_THROWS_AS(compose_rgba(t, feat, bg, store, "img"), TensorError);
}
