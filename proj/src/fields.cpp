#include "erl/fields.hpp"

#include <cmath>

namespace erl {

void MotionFrame::validate() const {
  if (expression.size() != kExpressionDim)
    throw TensorError("MotionFrame: expression must have 53 dims, got " +
                      std::to_string(expression.size()));
  int ones = 0;
  for (float e : emotion) {
    if (e != 0.0f && e != 1.0f) throw TensorError("MotionFrame: emotion must be one-hot");
    if (e == 1.0f) ++ones;
  }
  if (ones != 1) throw TensorError("MotionFrame: emotion must have exactly one 1");
  for (float v : expression)
    if (!std::isfinite(v)) throw TensorError("MotionFrame: non-finite expression");
}

namespace {

void init_trunk(ParamStore& store, const std::string& prefix, int in_dim,
                const FieldConfig& cfg, Rng& rng) {
  int skip = cfg.skip_layer();
  for (int l = 0; l < cfg.depth; ++l) {
    int fan_in = l == 0 ? in_dim : (l == skip ? cfg.width + in_dim : cfg.width);
    init_linear(store, prefix + ".trunk" + std::to_string(l), fan_in, cfg.width, rng);
  }
}

Tensor trunk_forward(Tape& tape, Tensor input, ParamStore& store,
                     const std::string& prefix, const FieldConfig& cfg) {
  int skip = cfg.skip_layer();
  Tensor h = input;
  for (int l = 0; l < cfg.depth; ++l) {
    if (l == skip && l > 0) h = concat<float>({h, input}, 1);
    const std::string name = prefix + ".trunk" + std::to_string(l);
    h = relu(linear(h, tape.leaf(store.at(name + ".w")), tape.leaf(store.at(name + ".b"))));
  }
  return h;
}

FieldBasis nerf_basis(Tape& tape, Tensor trunk_in, Tensor d, ParamStore& store,
                      const std::string& prefix, const FieldConfig& cfg) {
  Tensor h = trunk_forward(tape, trunk_in, store, prefix, cfg);
  Tensor sigma = softplus(linear(h, tape.leaf(store.at(prefix + ".density.w")),
                                 tape.leaf(store.at(prefix + ".density.b"))));
  Tensor d_enc = positional_encoding(d, cfg.pe_direction);
  if (d_enc.shape()[0] != h.shape()[0])
    d_enc = broadcast_to(d_enc, {h.shape()[0], d_enc.shape()[1]});
  Tensor basis = concat<float>({h, d_enc}, 1);
  return {sigma, basis};
}

}  // namespace

void init_head_field(ParamStore& store, const std::string& prefix,
                     const FieldConfig& cfg, Rng& rng) {
  int in_dim = 2 * cfg.pe_position * 3 + kExpressionDim;
  init_trunk(store, prefix, in_dim, cfg, rng);
  init_linear(store, prefix + ".density", cfg.width, 1, rng);
  init_linear(store, prefix + ".feature", cfg.width + 2 * cfg.pe_direction * 3,
              cfg.feature_dim, rng);
}

void init_static_field(ParamStore& store, const std::string& prefix,
                       const FieldConfig& cfg, Rng& rng) {
  int in_dim = 2 * cfg.pe_position * 3;
  init_trunk(store, prefix, in_dim, cfg, rng);
  init_linear(store, prefix + ".density", cfg.width, 1, rng);
  init_linear(store, prefix + ".feature", cfg.width + 2 * cfg.pe_direction * 3,
              cfg.feature_dim, rng);
}

void init_deform_field(ParamStore& store, const std::string& prefix,
                       const FieldConfig& cfg, Rng& rng) {
  int in_dim = 2 * cfg.pe_position * 3 + 2 * cfg.pe_direction * 6 +
               2 * cfg.pe_direction * 3;
  init_trunk(store, prefix, in_dim, cfg, rng);
  init_linear(store, prefix + ".out", cfg.width, 3, rng, /*zero=*/true);
}

FieldBasis head_field_basis(Tape& tape, Tensor x, Tensor z_exp, Tensor d,
                            ParamStore& store, const std::string& prefix,
                            const FieldConfig& cfg) {
  int n = x.shape()[0];
  Tensor x_enc = positional_encoding(x, cfg.pe_position);
  Tensor exp_rows = broadcast_to(z_exp, {n, kExpressionDim});
  Tensor input = concat<float>({x_enc, exp_rows}, 1);
  return nerf_basis(tape, input, d, store, prefix, cfg);
}

Tensor apply_feature_head(Tape& tape, Tensor basis, ParamStore& store,
                          const std::string& prefix) {
  return linear(basis, tape.leaf(store.at(prefix + ".feature.w")),
                tape.leaf(store.at(prefix + ".feature.b")));
}

Tensor apply_feature_head_weighted(Tape& tape, Tensor basis, Tensor weight_sum,
                                   ParamStore& store, const std::string& prefix) {
  Tensor wb = matmul(basis, tape.leaf(store.at(prefix + ".feature.w")));
  Tensor b = tape.leaf(store.at(prefix + ".feature.b"));
  int n = basis.shape()[0];
  Tensor bias = mul(broadcast_to(reshape(b, {1, b.shape()[0]}), {n, b.shape()[0]}),
                    weight_sum);
  return add(wb, bias);
}

FieldOutput head_field_forward(Tape& tape, Tensor x, Tensor z_exp, Tensor d,
                               ParamStore& store, const std::string& prefix,
                               const FieldConfig& cfg) {
  FieldBasis fb = head_field_basis(tape, x, z_exp, d, store, prefix, cfg);
  return {fb.density, apply_feature_head(tape, fb.basis, store, prefix)};
}

Tensor deform_forward(Tape& tape, Tensor x, Tensor z_pose, Tensor z_jaw,
                      ParamStore& store, const std::string& prefix,
                      const FieldConfig& cfg) {
  int n = x.shape()[0];
  Tensor x_enc = positional_encoding(x, cfg.pe_position);
  Tensor pose_enc = positional_encoding(z_pose, cfg.pe_direction);
  Tensor jaw_enc = positional_encoding(z_jaw, cfg.pe_direction);
  Tensor input = concat<float>(
      {x_enc, broadcast_to(pose_enc, {n, pose_enc.shape()[1]}),
       broadcast_to(jaw_enc, {n, jaw_enc.shape()[1]})}, 1);
  Tensor h = trunk_forward(tape, input, store, prefix, cfg);
  return linear(h, tape.leaf(store.at(prefix + ".out.w")),
                tape.leaf(store.at(prefix + ".out.b")));
}

FieldBasis static_field_basis(Tape& tape, Tensor x_warped, Tensor d,
                              ParamStore& store, const std::string& prefix,
                              const FieldConfig& cfg) {
  Tensor x_enc = positional_encoding(x_warped, cfg.pe_position);
  return nerf_basis(tape, x_enc, d, store, prefix, cfg);
}

FieldOutput static_field_forward(Tape& tape, Tensor x_warped, Tensor d,
                                 ParamStore& store, const std::string& prefix,
                                 const FieldConfig& cfg) {
  FieldBasis fb = static_field_basis(tape, x_warped, d, store, prefix, cfg);
  return {fb.density, apply_feature_head(tape, fb.basis, store, prefix)};
}

}  // namespace erl
