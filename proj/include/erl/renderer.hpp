#pragma once

#include "erl/fields.hpp"
#include "erl/geometry.hpp"

namespace erl {

// One branch's rendered output: per-pixel integrated feature and the
// accumulated opacity used as its density map.
struct RenderedMaps {
  int height = 0;
  int width = 0;
  Tensor feature;  // [h*w, feature_dim], row-major pixels
  Tensor density;  // [h*w, 1], values in [0,1]
};

enum class Branch { Head, Static };

struct RenderOptions {
  int n_samples = 64;
  bool stratified = false;
  uint64_t seed = 0;
  int chunk = 0;  // rays per batch; 0 renders all rays at once
};

// Flattened sample geometry for a ray bundle.
struct SampledRays {
  int n_rays = 0;
  int n_samples = 0;
  std::vector<float> positions;  // n_rays*n_samples*3
  std::vector<float> dirs;       // n_rays*n_samples*3
  std::vector<float> deltas;     // n_rays*n_samples, last uses t_far-t_last
};

SampledRays sample_rays(const std::vector<Ray>& rays, const RenderOptions& opt);

// Emission-absorption quadrature weights T_i*alpha_i for sigma [r,s] and
// interval lengths delta [r,s]: alpha_i = 1-exp(-sigma_i*delta_i),
// T_i = prod_{j<i}(1-alpha_j) computed as exp(-cumsum_excl(sigma*delta)).
template <typename T>
TensorT<T> quadrature_weights(TensorT<T> sigma, TensorT<T> delta) {
  if (sigma.shape() != delta.shape() || sigma.shape().size() != 2)
    throw TensorError("quadrature_weights: sigma " + shape_str(sigma.shape()) +
                      " vs delta " + shape_str(delta.shape()));
  TensorT<T> sd = mul(sigma, delta);
  TensorT<T> trans = exp(neg(cumsum_exclusive(sd)));
  TensorT<T> alpha = add_scalar(neg(exp(neg(sd))), T(1));
  return mul(trans, alpha);
}

// Single-ray integral over explicit samples; depths must be strictly
// ascending and below t_far. sigma [s,1], feature [s,c].
// Returns (feature [1,c], opacity [1,1]).
std::pair<Tensor, Tensor> integrate_ray(Tape& tape,
                                        const std::vector<float>& depths,
                                        Tensor sigma, Tensor feature,
                                        float t_far);

// Render one branch for a motion frame. Head branch conditions the field on
// frame.expression; static branch optionally warps sample positions by the
// deform net conditioned on frame pose and jaw. Rays come from the caller
// (head: current-frame camera; static: first-frame camera).
RenderedMaps render_feature_maps(Tape& tape, const std::vector<Ray>& rays,
                                 int height, int width,
                                 const MotionFrame& frame, Branch branch,
                                 bool deform_enabled, ParamStore& store,
                                 const FieldConfig& cfg,
                                 const RenderOptions& opt);

}  // namespace erl
