#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "erl/tensor.hpp"

namespace erl {

using Vec3 = std::array<float, 3>;

// Axis-angle head pose: rotation = angle (radians) times unit axis.
struct PoseCoeffs {
  Vec3 rotation{0, 0, 0};
  Vec3 translation{0, 0, 0};
};

struct Intrinsics {
  float focal = 64.0f;
  float cx = 32.0f;
  float cy = 32.0f;
  int height = 64;
  int width = 64;
};

// World-from-camera extrinsic, row-major 4x4; camera looks down -z.
struct Camera {
  std::array<float, 16> extrinsic;
  Intrinsics intrinsics;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
  float t_near;
  float t_far;
};

// Rodrigues rotation of the axis-angle pose into a 4x4 extrinsic.
Camera pose_to_camera(const PoseCoeffs& pose, const Intrinsics& intr,
                      float t_near = 0.5f, float t_far = 2.5f);

// Pinhole rays for every pixel, row-major. Pixel (i,j) maps through
// normalize(R * [(j+0.5-cx)/f, -(i+0.5-cy)/f, -1]).
std::vector<Ray> generate_rays(const Camera& cam, float t_near = 0.5f,
                               float t_far = 2.5f);

// Ascending sample depths along one ray. Deterministic mode places bin
// midpoints; stratified mode jitters uniformly within each bin under seed.
std::vector<float> sample_along_ray(const Ray& ray, int n, bool stratified,
                                    uint64_t seed);

}  // namespace erl
