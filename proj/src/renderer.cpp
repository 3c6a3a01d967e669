#include "erl/renderer.hpp"

#include <cmath>

namespace erl {

SampledRays sample_rays(const std::vector<Ray>& rays, const RenderOptions& opt) {
  SampledRays out;
  out.n_rays = static_cast<int>(rays.size());
  out.n_samples = opt.n_samples;
  size_t total = rays.size() * static_cast<size_t>(opt.n_samples);
  out.positions.resize(total * 3);
  out.dirs.resize(total * 3);
  out.deltas.resize(total);
  for (size_t r = 0; r < rays.size(); ++r) {
    const Ray& ray = rays[r];
    std::vector<float> ts =
        sample_along_ray(ray, opt.n_samples, opt.stratified, opt.seed + r);
    for (int i = 0; i < opt.n_samples; ++i) {
      size_t idx = r * opt.n_samples + i;
      for (int k = 0; k < 3; ++k) {
        out.positions[idx * 3 + k] = ray.origin[k] + ts[i] * ray.direction[k];
        out.dirs[idx * 3 + k] = ray.direction[k];
      }
      out.deltas[idx] =
          (i + 1 < opt.n_samples ? ts[i + 1] : ray.t_far) - ts[i];
    }
  }
  return out;
}

std::pair<Tensor, Tensor> integrate_ray(Tape& tape,
                                        const std::vector<float>& depths,
                                        Tensor sigma, Tensor feature,
                                        float t_far) {
  int s = static_cast<int>(depths.size());
  if (s == 0) throw TensorError("integrate_ray: no samples");
  for (int i = 1; i < s; ++i)
    if (depths[i] <= depths[i - 1])
      throw TensorError("integrate_ray: depths must be strictly ascending");
  if (sigma.shape() != Shape{s, 1})
    throw TensorError("integrate_ray: sigma must be [s,1], got " +
                      shape_str(sigma.shape()));
  std::vector<float> deltas(s);
  for (int i = 0; i < s; ++i)
    deltas[i] = (i + 1 < s ? depths[i + 1] : t_far) - depths[i];
  Tensor w = quadrature_weights(reshape(sigma, {1, s}),
                                tape.constant({1, s}, deltas));
  Tensor f = matmul(w, feature);
  Tensor opacity = reshape(sum_axis(w, 1), {1, 1});
  return {f, opacity};
}

namespace {

struct ChunkMaps {
  Tensor feature;
  Tensor density;
};

ChunkMaps render_chunk(Tape& tape, const SampledRays& geo,
                       const MotionFrame& frame, Branch branch,
                       bool deform_enabled, ParamStore& store,
                       const FieldConfig& cfg) {
  int r = geo.n_rays, s = geo.n_samples;
  int n = r * s;
  Tensor x = tape.constant({n, 3}, geo.positions);
  Tensor d = tape.constant({n, 3}, geo.dirs);

  FieldBasis fb;
  if (branch == Branch::Head) {
    std::vector<float> ze(frame.expression.begin(), frame.expression.end());
    Tensor z_exp = tape.constant({1, kExpressionDim}, std::move(ze));
    fb = head_field_basis(tape, x, z_exp, d, store, "head", cfg);
  } else {
    Tensor xw = x;
    if (deform_enabled) {
      Tensor z_pose = tape.constant(
          {1, 6}, {frame.pose.rotation[0], frame.pose.rotation[1],
                   frame.pose.rotation[2], frame.pose.translation[0],
                   frame.pose.translation[1], frame.pose.translation[2]});
      Tensor z_jaw =
          tape.constant({1, 3}, {frame.jaw[0], frame.jaw[1], frame.jaw[2]});
      xw = add(x, deform_forward(tape, x, z_pose, z_jaw, store, "deform", cfg));
    }
    fb = static_field_basis(tape, xw, d, store, "static", cfg);
  }

  Tensor w = quadrature_weights(reshape(fb.density, {r, s}),
                                tape.constant({r, s}, geo.deltas));
  Tensor opacity = reshape(sum_axis(w, 1), {r, 1});
  // the feature head is affine, so integrate the basis first and apply the
  // head once per pixel (bias scaled by the weight sum)
  Tensor wb = sum_groups(mul(fb.basis, reshape(w, {n, 1})), s);
  const char* prefix = branch == Branch::Head ? "head" : "static";
  Tensor feat = apply_feature_head_weighted(tape, wb, opacity, store, prefix);
  return {feat, opacity};
}

}  // namespace

RenderedMaps render_feature_maps(Tape& tape, const std::vector<Ray>& rays,
                                 int height, int width,
                                 const MotionFrame& frame, Branch branch,
                                 bool deform_enabled, ParamStore& store,
                                 const FieldConfig& cfg,
                                 const RenderOptions& opt) {
  if (static_cast<int>(rays.size()) != height * width)
    throw TensorError("render_feature_maps: got " +
                      std::to_string(rays.size()) + " rays for " +
                      std::to_string(height) + "x" + std::to_string(width));
  int total = static_cast<int>(rays.size());
  int chunk = opt.chunk > 0 ? opt.chunk : total;

  std::vector<Tensor> feats, dens;
  for (int start = 0; start < total; start += chunk) {
    int count = std::min(chunk, total - start);
    std::vector<Ray> part(rays.begin() + start, rays.begin() + start + count);
    RenderOptions part_opt = opt;
    part_opt.seed = opt.seed + static_cast<uint64_t>(start);
    SampledRays geo = sample_rays(part, part_opt);
    ChunkMaps m =
        render_chunk(tape, geo, frame, branch, deform_enabled, store, cfg);
    feats.push_back(m.feature);
    dens.push_back(m.density);
  }

  RenderedMaps out;
  out.height = height;
  out.width = width;
  out.feature = feats.size() == 1 ? feats[0] : concat(feats, 0);
  out.density = dens.size() == 1 ? dens[0] : concat(dens, 0);
  return out;
}

}  // namespace erl
