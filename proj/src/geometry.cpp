#include "erl/geometry.hpp"

#include <cmath>

namespace erl {

Camera pose_to_camera(const PoseCoeffs& pose, const Intrinsics& intr, float, float) {
  for (float v : pose.rotation)
    if (!std::isfinite(v)) throw TensorError("pose_to_camera: non-finite rotation");
  for (float v : pose.translation)
    if (!std::isfinite(v)) throw TensorError("pose_to_camera: non-finite translation");

  const Vec3& r = pose.rotation;
  float theta = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
  float R[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  if (theta > 1e-12f) {
    float kx = r[0] / theta, ky = r[1] / theta, kz = r[2] / theta;
    float c = std::cos(theta), s = std::sin(theta), v = 1.0f - c;
    R[0] = c + kx * kx * v;
    R[1] = kx * ky * v - kz * s;
    R[2] = kx * kz * v + ky * s;
    R[3] = ky * kx * v + kz * s;
    R[4] = c + ky * ky * v;
    R[5] = ky * kz * v - kx * s;
    R[6] = kz * kx * v - ky * s;
    R[7] = kz * ky * v + kx * s;
    R[8] = c + kz * kz * v;
  }
  Camera cam;
  cam.intrinsics = intr;
  cam.extrinsic = {R[0], R[1], R[2], pose.translation[0],
                   R[3], R[4], R[5], pose.translation[1],
                   R[6], R[7], R[8], pose.translation[2],
                   0,    0,    0,    1};
  return cam;
}

std::vector<Ray> generate_rays(const Camera& cam, float t_near, float t_far) {
  const Intrinsics& in = cam.intrinsics;
  if (in.focal <= 0.0f) throw TensorError("generate_rays: focal must be positive");
  const auto& e = cam.extrinsic;
  Vec3 origin = {e[3], e[7], e[11]};
  std::vector<Ray> rays;
  rays.reserve(static_cast<size_t>(in.height) * in.width);
  for (int i = 0; i < in.height; ++i) {
    for (int j = 0; j < in.width; ++j) {
      float x = (static_cast<float>(j) + 0.5f - in.cx) / in.focal;
      float y = -(static_cast<float>(i) + 0.5f - in.cy) / in.focal;
      float z = -1.0f;
      // rotate into world space
      float dx = e[0] * x + e[1] * y + e[2] * z;
      float dy = e[4] * x + e[5] * y + e[6] * z;
      float dz = e[8] * x + e[9] * y + e[10] * z;
      float inv = 1.0f / std::sqrt(dx * dx + dy * dy + dz * dz);
      rays.push_back({origin, {dx * inv, dy * inv, dz * inv}, t_near, t_far});
    }
  }
  return rays;
}

std::vector<float> sample_along_ray(const Ray& ray, int n, bool stratified,
                                    uint64_t seed) {
  if (n < 1) throw TensorError("sample_along_ray: n must be >= 1");
  std::vector<float> depths(n);
  float span = ray.t_far - ray.t_near;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    float u = stratified ? rng.uniform(0.0f, 1.0f) : 0.5f;
    depths[i] = ray.t_near + (static_cast<float>(i) + u) / static_cast<float>(n) * span;
  }
  return depths;
}

}  // namespace erl
