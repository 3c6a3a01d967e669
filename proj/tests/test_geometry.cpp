#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "erl/geometry.hpp"

using namespace erl;

namespace {

// Independent Rodrigues evaluation: R = I + sin(t) K + (1-cos(t)) K^2.
void rodrigues_oracle(const Vec3& r, float out[9]) {
  float t = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
  float I[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  if (t < 1e-12f) {
    std::copy(I, I + 9, out);
    return;
  }
  float k[3] = {r[0] / t, r[1] / t, r[2] / t};
  float K[9] = {0, -k[2], k[1], k[2], 0, -k[0], -k[1], k[0], 0};
  float K2[9];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      K2[i * 3 + j] = 0;
      for (int m = 0; m < 3; ++m) K2[i * 3 + j] += K[i * 3 + m] * K[m * 3 + j];
    }
  for (int i = 0; i < 9; ++i) out[i] = I[i] + std::sin(t) * K[i] + (1 - std::cos(t)) * K2[i];
}

}  // namespace

TEST_CASE("zero pose gives identity rotation and zero translation") {
  Camera cam = pose_to_camera({}, Intrinsics{});
  float expected[16] = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
  for (int i = 0; i < 16; ++i) CHECK(cam.extrinsic[i] == doctest::Approx(expected[i]));
}

TEST_CASE("quarter turn about z matches the Rodrigues oracle") {
  float half_pi = 1.5707963f;
  Camera cam = pose_to_camera({{0, 0, half_pi}, {0, 0, 0}}, Intrinsics{});
  CHECK(cam.extrinsic[0] == doctest::Approx(0.0f).epsilon(1e-6));
  CHECK(cam.extrinsic[1] == doctest::Approx(-1.0f).epsilon(1e-6));
  CHECK(cam.extrinsic[4] == doctest::Approx(1.0f).epsilon(1e-6));
  CHECK(cam.extrinsic[5] == doctest::Approx(0.0f).epsilon(1e-6));
  CHECK(cam.extrinsic[10] == doctest::Approx(1.0f).epsilon(1e-6));
}

TEST_CASE("pure translation lands in the last column") {
  Camera cam = pose_to_camera({{0, 0, 0}, {1, 2, 3}}, Intrinsics{});
  CHECK(cam.extrinsic[3] == 1.0f);
  CHECK(cam.extrinsic[7] == 2.0f);
  CHECK(cam.extrinsic[11] == 3.0f);
  CHECK(cam.extrinsic[0] == 1.0f);
}

TEST_CASE("rotation block matches the oracle and is orthonormal for 1000 random poses") {
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    Vec3 r = {rng.uniform(-3.0f, 3.0f), rng.uniform(-3.0f, 3.0f), rng.uniform(-3.0f, 3.0f)};
    Camera cam = pose_to_camera({r, {0, 0, 0}}, Intrinsics{});
    float O[9];
    rodrigues_oracle(r, O);
    float R[9] = {cam.extrinsic[0], cam.extrinsic[1], cam.extrinsic[2],
                  cam.extrinsic[4], cam.extrinsic[5], cam.extrinsic[6],
                  cam.extrinsic[8], cam.extrinsic[9], cam.extrinsic[10]};
    for (int i = 0; i < 9; ++i) REQUIRE(R[i] == doctest::Approx(O[i]).epsilon(1e-5));
    // R^T R = I
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        float dot = 0;
        for (int m = 0; m < 3; ++m) dot += R[m * 3 + i] * R[m * 3 + j];
        REQUIRE(dot == doctest::Approx(i == j ? 1.0f : 0.0f).epsilon(1e-5));
      }
  }
}

TEST_CASE("non-finite pose is rejected") {
  PoseCoeffs p;
  p.rotation[0] = std::nanf("");
  CHECK_THROWS_AS(pose_to_camera(p, Intrinsics{}), TensorError);
}

TEST_CASE("identity camera center pixel looks down -z") {
  Camera cam = pose_to_camera({}, Intrinsics{});
  auto rays = generate_rays(cam);
  // center of the 64x64 grid: pixel (31..32); with cx=cy=32 pixel (31,31)
  // has offset (-0.5+0.5... ) use the ray at i=31,j=31: direction ~(-0/64,..)
  const Ray& r = rays[31 * 64 + 31];
  CHECK(r.direction[0] == doctest::Approx(0.0f).epsilon(1e-2));
  CHECK(r.direction[1] == doctest::Approx(0.0f).epsilon(1e-2));
  CHECK(r.direction[2] == doctest::Approx(-1.0f).epsilon(1e-4));
}

TEST_CASE("64x64 grid yields exactly 4096 unit-length rays") {
  Camera cam = pose_to_camera({{0.3f, -0.2f, 0.1f}, {0.5f, 0, 0}}, Intrinsics{});
  auto rays = generate_rays(cam);
  CHECK(rays.size() == 4096);
  for (const Ray& r : rays) {
    float n2 = r.direction[0] * r.direction[0] + r.direction[1] * r.direction[1] +
               r.direction[2] * r.direction[2];
    REQUIRE(n2 == doctest::Approx(1.0f).epsilon(1e-6));
  }
}

TEST_CASE("corner pixel matches pinhole projection") {
  Camera cam = pose_to_camera({}, Intrinsics{});
  auto rays = generate_rays(cam);
  const Ray& r = rays[0];  // pixel (0,0)
  float ex = -31.5f / 64.0f, ey = 31.5f / 64.0f, ez = -1.0f;
  float n = std::sqrt(ex * ex + ey * ey + ez * ez);
  CHECK(r.direction[0] == doctest::Approx(ex / n).epsilon(1e-6));
  CHECK(r.direction[1] == doctest::Approx(ey / n).epsilon(1e-6));
  CHECK(r.direction[2] == doctest::Approx(ez / n).epsilon(1e-6));
}

TEST_CASE("non-positive focal is rejected") {
  Camera cam = pose_to_camera({}, Intrinsics{});
  cam.intrinsics.focal = 0.0f;
  CHECK_THROWS_AS(generate_rays(cam), TensorError);
}

TEST_CASE("deterministic sampling places bin midpoints") {
  Ray ray{{0, 0, 0}, {0, 0, -1}, 0.0f, 1.0f};
  auto d = sample_along_ray(ray, 2, false, 0);
  CHECK(d[0] == doctest::Approx(0.25f));
  CHECK(d[1] == doctest::Approx(0.75f));
}

TEST_CASE("64 samples are strictly ascending inside the bounds") {
  Ray ray{{0, 0, 0}, {0, 0, -1}, 0.5f, 2.5f};
  auto d = sample_along_ray(ray, 64, false, 0);
  CHECK(d.size() == 64);
  CHECK(d.front() > ray.t_near);
  CHECK(d.back() < ray.t_far);
  for (size_t i = 1; i < d.size(); ++i) REQUIRE(d[i] > d[i - 1]);
}

TEST_CASE("stratified sampling is deterministic under a seed and stays in-bin") {
  Ray ray{{0, 0, 0}, {0, 0, -1}, 0.5f, 2.5f};
  auto a = sample_along_ray(ray, 32, true, 1234);
  auto b = sample_along_ray(ray, 32, true, 1234);
  CHECK(a == b);
  float span = ray.t_far - ray.t_near;
  for (int i = 0; i < 32; ++i) {
    float lo = ray.t_near + span * static_cast<float>(i) / 32.0f;
    float hi = ray.t_near + span * static_cast<float>(i + 1) / 32.0f;
    REQUIRE(a[i] >= lo);
    REQUIRE(a[i] <= hi);
  }
}

TEST_CASE("n = 0 is rejected") {
  Ray ray{{0, 0, 0}, {0, 0, -1}, 0.0f, 1.0f};
  CHECK_THROWS_AS(sample_along_ray(ray, 0, false, 0), TensorError);
}
