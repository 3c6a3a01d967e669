#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "erl/tensor.hpp"

using namespace erl;

TEST_CASE("elementwise add") {
  Tape t;
  Tensor a = t.constant({2}, {1.0f, 2.0f});
  Tensor b = t.constant({2}, {3.0f, 4.0f});
  Tensor c = add(a, b);
  CHECK(c.value()[0] == 4.0f);
  CHECK(c.value()[1] == 6.0f);
}

TEST_CASE("matmul of ones") {
  Tape t;
  Tensor a = t.constant({2, 3}, std::vector<float>(6, 1.0f));
  Tensor b = t.constant({3, 2}, std::vector<float>(6, 1.0f));
  Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  for (float v : c.value()) CHECK(v == 3.0f);
}

TEST_CASE("softplus at zero is ln 2") {
  Tape t;
  Tensor x = t.constant({1}, {0.0f});
  CHECK(softplus(x).scalar() == doctest::Approx(0.6931f).epsilon(1e-4));
}

TEST_CASE("shape mismatch raises a structured error") {
  Tape t;
  Tensor a = t.constant({2, 3}, std::vector<float>(6, 0.0f));
  Tensor b = t.constant({4}, std::vector<float>(4, 0.0f));
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("add"), TensorError);
  Tensor c = t.constant({3, 3}, std::vector<float>(9, 0.0f));
  CHECK_THROWS_AS(matmul(a, reshape(c, {9, 1})), TensorError);
}

TEST_CASE("backward on product") {
  Parameter px, py;
  px.name = "x"; px.shape = {1}; px.value = {2.0f}; px.grad = {0.0f};
  py.name = "y"; py.shape = {1}; py.value = {3.0f}; py.grad = {0.0f};
  Tape t;
  Tensor loss = mul(t.leaf(px), t.leaf(py));
  t.backward(loss);
  CHECK(px.grad[0] == 3.0f);
  CHECK(py.grad[0] == 2.0f);
}

TEST_CASE("backward on sum of squares") {
  Parameter p;
  p.name = "x"; p.shape = {3}; p.value = {1.0f, 2.0f, 3.0f}; p.grad = {0, 0, 0};
  Tape t;
  t.backward(sum(square(t.leaf(p))));
  CHECK(p.grad[0] == 2.0f);
  CHECK(p.grad[1] == 4.0f);
  CHECK(p.grad[2] == 6.0f);
}

TEST_CASE("backward rejects non-scalar loss") {
  Parameter p;
  p.name = "x"; p.shape = {2}; p.value = {1.0f, 2.0f}; p.grad = {0, 0};
  Tape t;
  Tensor x = t.leaf(p);
  CHECK_THROWS_AS(t.backward(square(x)), TensorError);
}

TEST_CASE("backward of mean(relu(Wx)) matches finite differences") {
  Rng rng(11);
  std::vector<float> w(4 * 5);
  std::vector<double> x(5);
  for (auto& v : w) v = rng.uniform(-1.0f, 1.0f);
  for (auto& v : x) v = rng.uniform(-1.0f, 1.0f);
  double err = gradient_check(
      [&](auto& t, auto wt) {
        auto xt = constant_like(t, {5, 1}, x);
        return mean(relu(matmul(reshape(wt, {4, 5}), xt)));
      },
      {4, 5}, w, 1e-3);
  CHECK(err < 1e-4);
}

TEST_CASE("gradient_check on x^2 is nearly exact") {
  double err = gradient_check([](auto&, auto x) { return square(x); }, {1},
                              {3.0f}, 1e-3);
  CHECK(err < 1e-6);
}

TEST_CASE("gradient_check on a composed MLP") {
  Rng rng(7);
  std::vector<float> x(6);
  std::vector<double> w1(6 * 8), w2(8 * 1);
  for (auto& v : x) v = rng.uniform(-1.0f, 1.0f);
  for (auto& v : w1) v = rng.uniform(-0.5f, 0.5f);
  for (auto& v : w2) v = rng.uniform(-0.5f, 0.5f);
  double err = gradient_check(
      [&](auto& t, auto xt) {
        auto h = tanh(matmul(reshape(xt, {1, 6}), constant_like(t, {6, 8}, w1)));
        return mean(matmul(h, constant_like(t, {8, 1}, w2)));
      },
      {6}, x, 1e-3);
  CHECK(err < 1e-4);
}

TEST_CASE("stop_gradient: loss sg(x)*x has gradient x, not 2x") {
  Parameter p;
  p.name = "x"; p.shape = {1}; p.value = {1.7f}; p.grad = {0.0f};
  Tape t;
  Tensor x = t.leaf(p);
  t.backward(mul(stop_gradient(x), x));
  CHECK(p.grad[0] == doctest::Approx(1.7f));
}

TEST_CASE("stop_gradient forward passes the value through") {
  Tape t;
  Tensor x = t.constant({3}, {1.0f, -2.0f, 0.5f});
  Tensor y = stop_gradient(x);
  CHECK(y.value() == x.value());
}

TEST_CASE("broadcasting follows trailing-dimension alignment") {
  Tape t;
  Tensor a = t.constant({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = t.constant({3}, {10, 20, 30});
  Tensor c = add(a, b);
  CHECK(c.value() == std::vector<float>{11, 22, 33, 14, 25, 36});
  Tensor col = t.constant({2, 1}, {100, 200});
  Tensor d = add(a, col);
  CHECK(d.value() == std::vector<float>{101, 102, 103, 204, 205, 206});
}

TEST_CASE("gradient through broadcast reduces correctly") {
  Rng rng(3);
  std::vector<float> b(3);
  for (auto& v : b) v = rng.uniform(-1.0f, 1.0f);
  double err = gradient_check(
      [&](auto& t, auto bt) {
        auto a = constant_like(t, {4, 3},
                               {1, 2, 3, 4, 5, 6, 7, 8, 9, 1, 0, 2});
        return mean(square(mul(a, bt)));
      },
      {3}, b, 1e-3);
  CHECK(err < 1e-4);
}

namespace {

template <typename F>
double worst_over_random(F f, const Shape& shape, float lo, float hi,
                         uint64_t seed, int trials = 100) {
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < trials; ++i) {
    std::vector<float> x(numel(shape));
    for (auto& v : x) v = rng.uniform(lo, hi);
    worst = std::max(worst, gradient_check(f, shape, x, 1e-3));
  }
  return worst;
}

}  // namespace

TEST_CASE("every registered op passes finite-difference checks on 100 random inputs") {
  std::vector<double> k6 = {1, 2, 3, 4, 5, 6};
  CHECK(worst_over_random([&](auto& t, auto x) { return mean(square(add(x, constant_like(t, {6}, k6)))); }, {6}, -2, 2, 1) < 1e-4);
  CHECK(worst_over_random([&](auto& t, auto x) { return mean(square(sub(x, constant_like(t, {6}, k6)))); }, {6}, -2, 2, 2) < 1e-4);
  CHECK(worst_over_random([&](auto& t, auto x) { return mean(square(mul(x, constant_like(t, {6}, k6)))); }, {6}, -2, 2, 3) < 1e-4);
  CHECK(worst_over_random([&](auto& t, auto x) { return mean(square(div(constant_like(t, {6}, k6), x))); }, {6}, 0.5f, 2, 4) < 1e-4);
  CHECK(worst_over_random([&](auto& t, auto x) { return mean(matmul(reshape(x, {2, 3}), constant_like(t, {3, 2}, k6))); }, {6}, -2, 2, 5) < 1e-4);
  CHECK(worst_over_random([&](auto& t, auto x) { return mean(square(linear(reshape(x, {2, 3}), constant_like(t, {3, 2}, k6), constant_like(t, {2}, {0.5, -0.5})))); }, {6}, -2, 2, 6) < 1e-4);
  CHECK(worst_over_random([&](auto& t, auto x) {
    std::vector<decltype(x)> parts{x, constant_like(t, {2, 2}, {1, 2, 3, 4})};
    return mean(square(concat(parts, 1)));
  }, {2, 2}, -2, 2, 7) < 1e-4);
  CHECK(worst_over_random([](auto&, auto x) { return mean(square(reshape(x, {3, 2}))); }, {2, 3}, -2, 2, 8) < 1e-4);
  CHECK(worst_over_random([](auto&, auto x) { return mean(square(slice(x, 1, 1, 2))); }, {2, 4}, -2, 2, 9) < 1e-4);
  CHECK(worst_over_random([](auto&, auto x) { return sum(square(x)); }, {5}, -2, 2, 10) < 1e-4);
  CHECK(worst_over_random([](auto&, auto x) { return mean(square(x)); }, {5}, -2, 2, 11) < 1e-4);
  CHECK(worst_over_random([](auto&, auto x) { return mean(square(sum_axis(x, 1))); }, {2, 3, 2}, -2, 2, 12) < 1e-4);
  CHECK(worst_over_random([](auto&, auto x) { return mean(erl::exp(x)); }, {5}, -2, 1, 13) < 1e-4);
  CHECK(worst_over_random([](auto&, auto x) { return mean(erl::log(x)); }, {5}, 0.5f, 2, 14) < 1e-4);
  CHECK(worst_over_random([](auto&, auto x) { return mean(erl::sin(x)); }, {5}, -2, 2, 15) < 1e-4);
  CHECK(worst_over_random([](auto&, auto x) { return mean(erl::cos(x)); }, {5}, -2, 2, 16) < 1e-4);
  CHECK(worst_over_random([](auto&, auto x) { return mean(relu(x)); }, {5}, 0.2f, 2, 17) < 1e-4);
  CHECK(worst_over_random([](auto&, auto x) { return mean(softplus(x)); }, {5}, -2, 2, 18) < 1e-4);
  CHECK(worst_over_random([](auto&, auto x) { return mean(sigmoid(x)); }, {5}, -2, 2, 19) < 1e-4);
  CHECK(worst_over_random([](auto&, auto x) { return mean(erl::tanh(x)); }, {5}, -2, 2, 20) < 1e-4);
  CHECK(worst_over_random([&](auto& t, auto x) {
    auto w = constant_like(t, {2, 4}, {1, -2, 3, -4, 2, 0.5, -1, 1.5});
    return mean(mul(softmax(x, 1), w));
  }, {2, 4}, -2, 2, 21) < 1e-4);
  CHECK(worst_over_random([](auto&, auto x) { return mean(square(broadcast_to(x, {4, 3}))); }, {3}, -2, 2, 22) < 1e-4);
  CHECK(worst_over_random([](auto&, auto x) { return mean(square(cumsum_exclusive(x))); }, {2, 4}, -2, 2, 23) < 1e-4);
  CHECK(worst_over_random([](auto&, auto x) { return mean(square(gather_rows(x, {2, 0, 2}))); }, {3, 2}, -2, 2, 24) < 1e-4);
  CHECK(worst_over_random([](auto&, auto x) { return mean(square(avg_pool2(x))); }, {4, 4, 2}, -2, 2, 25) < 1e-4);
  CHECK(worst_over_random([&](auto& t, auto x) { return mse(x, constant_like(t, {6}, k6)); }, {6}, -2, 2, 26) < 1e-4);
}

TEST_CASE("backward is deterministic") {
  Rng rng(5);
  Parameter p;
  p.name = "x"; p.shape = {8, 8};
  p.value.resize(64);
  for (auto& v : p.value) v = rng.uniform(-1.0f, 1.0f);
  p.grad.assign(64, 0.0f);
  auto run = [&]() {
    p.zero_grad();
    Tape t;
    Tensor x = t.leaf(p);
    Tensor h = relu(matmul(x, x));
    t.backward(mean(square(h)));
    return p.grad;
  };
  auto g1 = run();
  auto g2 = run();
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(float)) == 0);
}

TEST_CASE("gradient_check flags non-finite values") {
  CHECK_THROWS_AS(gradient_check([](auto&, auto x) { return erl::log(x); }, {1},
                                 {-1.0f}, 1e-3),
                  TensorError);
}

TEST_CASE("ParamStore name uniqueness and hashing") {
  ParamStore store;
  store.create("a.w", {2, 2});
  CHECK_THROWS_AS(store.create("a.w", {2, 2}), TensorError);
  uint64_t h0 = store.hash();
  store.at("a.w").value[0] = 1.0f;
  CHECK(store.hash() != h0);
  CHECK(store.hash("b.") != store.hash("a."));
}
