#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "erl/training.hpp"

using namespace erl;

namespace {

FieldConfig tiny_fields() {
  FieldConfig f;
  f.depth = 2;
  f.width = 16;
  f.pe_position = 2;
  f.pe_direction = 1;
  f.feature_dim = 8;
  return f;
}

PipelineConfig tiny_pipeline() {
  PipelineConfig p;
  p.n_samples = 4;
  return p;
}

}  // namespace

TEST_CASE("photometric loss matches the worked examples") {
  Tape t;
  int h = 2, w = 2;
  Tensor img = t.constant({h, w, 3}, std::vector<float>(h * w * 3, 0.6f));
  Tensor ones = t.constant({h, w, 1}, std::vector<float>(h * w, 1.0f));
  Tensor zeros = t.constant({h, w, 1}, std::vector<float>(h * w, 0.0f));
  CHECK(photometric_loss(img, img, ones, ones, 1.0f, 1.0f).scalar() == 0.0f);

  // uniform error eps with beta_h=2 and full head mask -> 2*eps^2
  float eps = 0.1f;
  Tensor gt = t.constant({h, w, 3}, std::vector<float>(h * w * 3, 0.6f + eps));
  CHECK(photometric_loss(img, gt, ones, zeros, 2.0f, 1.0f).scalar() ==
        doctest::Approx(2.0f * eps * eps));

  // fully masked-out error contributes nothing
  CHECK(photometric_loss(img, gt, zeros, zeros, 2.0f, 1.0f).scalar() == 0.0f);

  Tensor bad = t.constant({h, w, 1}, std::vector<float>(h * w, 0.0f));
  CHECK_THROWS_AS(photometric_loss(img, bad, ones, ones, 1.0f, 1.0f),
                  TensorError);
}

TEST_CASE("perceptual proxy is zero on equal images and positive on shifts") {
  Tape t;
  int n = 16;
  std::vector<float> checker(n * n * 3), shifted(n * n * 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int c = 0; c < 3; ++c) {
        checker[(i * n + j) * 3 + c] = float((i + j) % 2);
        shifted[(i * n + j) * 3 + c] = float((i + j + 1) % 2);
      }
  Tensor a = t.constant({n, n, 3}, checker);
  Tensor b = t.constant({n, n, 3}, shifted);
  CHECK(perceptual_proxy_loss(a, a, 7).scalar() == 0.0f);
  float d = perceptual_proxy_loss(a, b, 7).scalar();
  CHECK(d > 0.0f);
  // frozen weights: same seed reproduces, different seed differs
  CHECK(perceptual_proxy_loss(a, b, 7).scalar() == d);
  CHECK(perceptual_proxy_loss(a, b, 8).scalar() != d);
}

TEST_CASE("strided convolution halves spatial dims with rounding up") {
  Tape t;
  Tensor a = t.constant({5, 7, 2}, std::vector<float>(70, 1.0f));
  std::vector<float> w(9 * 2 * 3, 0.0f);
  Tensor y = conv3x3s2_const(a, w, 3);
  CHECK(y.shape() == Shape{3, 4, 3});
}

TEST_CASE("adam takes a first step of magnitude about lr") {
  ParamStore store;
  Parameter& p = store.create("w", {2});
  p.value = {1.0f, -2.0f};
  p.grad = {0.3f, -0.7f};
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Adam;
  adam_step(store, cfg, 0.01f);
  // bias-corrected first step is lr*g/(|g|+eps) ~= lr*sign(g)
  CHECK(p.value[0] == doctest::Approx(1.0f - 0.01f).epsilon(1e-4));
  CHECK(p.value[1] == doctest::Approx(-2.0f + 0.01f).epsilon(1e-4));
  CHECK(p.step == 1);
}

TEST_CASE("zero gradient leaves adam parameters fixed") {
  ParamStore store;
  Parameter& p = store.create("w", {3});
  p.value = {0.5f, 1.5f, -0.5f};
  store.zero_grads();
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Adam;
  std::vector<float> before = p.value;
  for (int i = 0; i < 5; ++i) adam_step(store, cfg, 0.1f);
  CHECK(p.value == before);
}

TEST_CASE("adamw applies decoupled decay before the adam delta") {
  ParamStore store;
  Parameter& p = store.create("w", {1});
  p.value = {2.0f};
  store.zero_grads();
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::AdamW;
  cfg.weight_decay = 0.1f;
  adam_step(store, cfg, 0.5f);
  CHECK(p.value[0] == doctest::Approx(2.0f * (1.0f - 0.5f * 0.1f)));
}

TEST_CASE("frozen parameters are skipped by the optimizer") {
  ParamStore store;
  Parameter& p = store.create("w", {1}, /*trainable=*/false);
  p.value = {3.0f};
  TrainConfig cfg;
  cfg.weight_decay = 0.5f;
  adam_step(store, cfg, 1.0f);
  CHECK(p.value[0] == 3.0f);
  CHECK(p.step == 0);
}

TEST_CASE("missing gradients are reported by name") {
  ParamStore store;
  Parameter& p = store.create("conv.w", {2});
  p.value = {1.0f, 1.0f};
  p.grad.clear();
  TrainConfig cfg;
  try {
    adam_step(store, cfg, 0.1f);
    FAIL("expected an error");
  } catch (const TensorError& e) {
    CHECK(std::string(e.what()).find("conv.w") != std::string::npos);
  }
}

TEST_CASE("checkpoints round-trip values, moments and step counters") {
  FieldConfig fcfg = tiny_fields();
  PipelineConfig pcfg = tiny_pipeline();
  ParamStore store;
  Rng rng(11);
  init_dbf_nerf(store, fcfg, pcfg, rng);
  // populate optimizer state with a couple of fake steps
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Adam;
  Rng grng(12);
  for (int s = 0; s < 3; ++s) {
    for (auto& [_, p] : store.all()) {
      p->grad.resize(p->value.size());
      for (auto& g : p->grad) g = grng.uniform(-0.1f, 0.1f);
    }
    adam_step(store, cfg, 1e-3f);
  }

  std::string dir = "/tmp/erl_ckpt_test";
  std::filesystem::create_directories(dir);
  std::string path = dir + "/a.ckpt";
  save_checkpoint(store, path);

  ParamStore other;
  load_checkpoint(other, path);
  CHECK(other.total_values() == store.total_values());
  CHECK(other.hash() == store.hash());
  for (auto& [name, p] : store.all()) {
    Parameter& q = other.at(name);
    REQUIRE(q.value == p->value);
    REQUIRE(q.adam_m == p->adam_m);
    REQUIRE(q.adam_v == p->adam_v);
    REQUIRE(q.step == p->step);
    REQUIRE(q.trainable == p->trainable);
  }

  // re-saving the loaded store reproduces the file byte for byte
  std::string path2 = dir + "/b.ckpt";
  save_checkpoint(other, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
  CHECK(!s1.empty());
  CHECK(s1.substr(0, 4) == "ERLC");
}

TEST_CASE("corrupt checkpoints are rejected without touching the store") {
  std::string dir = "/tmp/erl_ckpt_test";
  std::filesystem::create_directories(dir);

  ParamStore store;
  Parameter& p = store.create("w", {1});
  p.value = {4.0f};
  uint64_t before = store.hash();

  std::string bad = dir + "/bad.ckpt";
  { std::ofstream f(bad, std::ios::binary); f << "NOPE00000000"; }
  CHECK_THROWS_AS(load_checkpoint(store, bad), TensorError);
  CHECK(store.hash() == before);
  CHECK(store.at("w").value[0] == 4.0f);

  save_checkpoint(store, dir + "/good.ckpt");
  std::string trunc = dir + "/trunc.ckpt";
  {
    std::ifstream f(dir + "/good.ckpt", std::ios::binary);
    std::string s((std::istreambuf_iterator<char>(f)), {});
    std::ofstream g(trunc, std::ios::binary);
    g.write(s.data(), long(s.size()) - 3);
  }
  try {
    load_checkpoint(store, trunc);
    FAIL("expected an error");
  } catch (const TensorError& e) {
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }
  CHECK(store.hash() == before);

  CHECK_THROWS_AS(load_checkpoint(store, dir + "/does_not_exist.ckpt"),
                  TensorError);
}

TEST_CASE("scene frames render at the composed resolution") {
  SyntheticScene scene = make_synthetic_scene(5, 2, 8);
  FieldConfig fcfg = tiny_fields();
  PipelineConfig pcfg = tiny_pipeline();
  ParamStore store;
  Rng rng(6);
  init_dbf_nerf(store, fcfg, pcfg, rng);
  Tape t;
  Tensor img = render_scene_frame(t, scene, 0, store, fcfg, pcfg, true, true);
  CHECK(img.shape() == Shape{16, 16, 3});
  for (float v : img.value()) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
  CHECK_THROWS_AS(render_scene_frame(t, scene, 2, store, fcfg, pcfg, true, true),
                  TensorError);

  PipelineConfig wrong = pcfg;
  wrong.upsample_blocks = 2;
  ParamStore store2;
  init_dbf_nerf(store2, fcfg, wrong, rng);
  Tape t2;
  CHECK_THROWS_AS(
      render_scene_frame(t2, scene, 0, store2, fcfg, wrong, true, true),
      TensorError);
}

TEST_CASE("a short training run lowers the loss and is deterministic") {
  SyntheticScene scene = make_synthetic_scene(5, 2, 8);
  FieldConfig fcfg = tiny_fields();
  PipelineConfig pcfg = tiny_pipeline();
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Adam;
  cfg.lr = 2e-3f;
  cfg.iters = 60;

  ParamStore store;
  Rng rng(6);
  init_dbf_nerf(store, fcfg, pcfg, rng);
  auto rows = train_dbf_nerf(scene, store, fcfg, pcfg, cfg, 10);
  REQUIRE(rows.size() >= 2);
  CHECK(rows.back().total < rows.front().total);

  ParamStore store2;
  Rng rng2(6);
  init_dbf_nerf(store2, fcfg, pcfg, rng2);
  auto rows2 = train_dbf_nerf(scene, store2, fcfg, pcfg, cfg, 10);
  CHECK(store2.hash() == store.hash());
  for (size_t i = 0; i < rows.size(); ++i)
    REQUIRE(rows2[i].total == rows[i].total);
}

TEST_CASE("a zero step size leaves the parameter values untouched") {
  ParamStore store;
  Parameter& p = store.create("w", {2});
  p.value = {1.0f, -1.0f};
  p.grad = {0.5f, 0.25f};
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Adam;
  uint64_t before = store.hash();
  adam_step(store, cfg, 0.0f);
  CHECK(store.hash() == before);
  CHECK(p.step == 1);  // moments still advance

  TrainConfig bad;
  bad.lr = 0.0f;
  CHECK_THROWS_AS(bad.validate(), TensorError);
}

TEST_CASE("disabling the static branch keeps its parameters fixed") {
  SyntheticScene scene = make_synthetic_scene(5, 2, 8);
  FieldConfig fcfg = tiny_fields();
  PipelineConfig pcfg = tiny_pipeline();
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Adam;
  cfg.lr = 1e-3f;
  cfg.iters = 5;
  cfg.dual_branch = false;
  cfg.deform_enabled = false;
  ParamStore store;
  Rng rng(6);
  init_dbf_nerf(store, fcfg, pcfg, rng);
  uint64_t static_before = store.hash("static.");
  uint64_t deform_before = store.hash("deform.");
  uint64_t head_before = store.hash("head.");
  train_dbf_nerf(scene, store, fcfg, pcfg, cfg, 1);
  CHECK(store.hash("static.") == static_before);
  CHECK(store.hash("deform.") == deform_before);
  CHECK(store.hash("head.") != head_before);
}

TEST_CASE("loss csv lists one row per log point") {
  std::string dir = "/tmp/erl_csv_test";
  std::filesystem::create_directories(dir);
  std::string path = dir + "/loss.csv";
  write_loss_csv(path, {{0, 1.0f, 2.0f, 3.0f}, {50, 0.5f, 0.25f, 0.75f}});
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  CHECK(line == "iteration,L_pho,L_per,total");
  int rows = 0;
  while (std::getline(f, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("config validation rejects bad values") {
  TrainConfig cfg;
  cfg.lr = -1.0f;
  CHECK_THROWS_AS(cfg.validate(), TensorError);
  TrainConfig cfg2;
  cfg2.beta1 = 1.0f;
  CHECK_THROWS_AS(cfg2.validate(), TensorError);
  TrainConfig cfg3;
  cfg3.eps = 0.0f;
  CHECK_THROWS_AS(cfg3.validate(), TensorError);
  TrainConfig ok;
  CHECK_NOTHROW(ok.validate());
}
