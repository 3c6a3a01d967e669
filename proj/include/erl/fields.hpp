#pragma once

#include <string>

#include "erl/geometry.hpp"
#include "erl/tensor.hpp"

namespace erl {

// Per-frame motion coefficient bundle.
struct MotionFrame {
  std::vector<float> expression;     // 53
  PoseCoeffs pose;                   // 6 dof
  Vec3 jaw{0, 0, 0};                 // jaw rotation
  std::array<float, 5> emotion{1, 0, 0, 0, 0};  // one-hot

  void validate() const;
};

constexpr int kExpressionDim = 53;
constexpr int kEmotionDim = 5;
constexpr int kFeatureDim = 256;

struct FieldConfig {
  int depth = 8;        // trunk layers
  int width = 128;      // trunk units
  int pe_position = 10; // frequencies for positions
  int pe_direction = 4; // frequencies for directions / pose / jaw
  int feature_dim = kFeatureDim;

  int skip_layer() const { return depth / 2; }
};

// gamma(x): per frequency m=0..L-1, [sin(2^m pi x), cos(2^m pi x)]; [n,k] -> [n,2Lk].
template <typename T>
TensorT<T> positional_encoding(TensorT<T> x, int L) {
  if (L < 1) throw TensorError("positional_encoding: L must be >= 1");
  std::vector<TensorT<T>> parts;
  parts.reserve(2 * L);
  T freq = T(3.14159265358979323846);
  for (int m = 0; m < L; ++m) {
    TensorT<T> s = scale(x, freq);
    parts.push_back(sin(s));
    parts.push_back(cos(s));
    freq *= T(2);
  }
  int axis = static_cast<int>(x.shape().size()) - 1;
  return concat(parts, axis);
}

struct FieldOutput {
  Tensor density;  // [n,1], softplus-activated
  Tensor feature;  // [n,feature_dim]
};

// Trunk output before the affine feature head; the head is linear, so
// callers may integrate the basis along rays first and apply the head once
// per pixel (see renderer).
struct FieldBasis {
  Tensor density;  // [n,1]
  Tensor basis;    // [n, width + 2*pe_direction*3]
};

void init_head_field(ParamStore& store, const std::string& prefix,
                     const FieldConfig& cfg, Rng& rng);
void init_static_field(ParamStore& store, const std::string& prefix,
                       const FieldConfig& cfg, Rng& rng);
// Final layer zero-initialized: the untrained deform is the identity warp.
void init_deform_field(ParamStore& store, const std::string& prefix,
                       const FieldConfig& cfg, Rng& rng);

// x [n,3], z_exp [1,53] (injected raw), d [n,3] unit directions.
FieldBasis head_field_basis(Tape& tape, Tensor x, Tensor z_exp, Tensor d,
                            ParamStore& store, const std::string& prefix,
                            const FieldConfig& cfg);
FieldOutput head_field_forward(Tape& tape, Tensor x, Tensor z_exp, Tensor d,
                               ParamStore& store, const std::string& prefix,
                               const FieldConfig& cfg);

// x [n,3], z_pose [1,6], z_jaw [1,3] -> per-point displacement [n,3].
Tensor deform_forward(Tape& tape, Tensor x, Tensor z_pose, Tensor z_jaw,
                      ParamStore& store, const std::string& prefix,
                      const FieldConfig& cfg);

FieldBasis static_field_basis(Tape& tape, Tensor x_warped, Tensor d,
                              ParamStore& store, const std::string& prefix,
                              const FieldConfig& cfg);
FieldOutput static_field_forward(Tape& tape, Tensor x_warped, Tensor d,
                                 ParamStore& store, const std::string& prefix,
                                 const FieldConfig& cfg);

// The affine feature head applied to a (possibly ray-integrated) basis.
Tensor apply_feature_head(Tape& tape, Tensor basis, ParamStore& store,
                          const std::string& prefix);
// Feature head with the bias weighted by accumulated opacity, for bases
// integrated along rays (sum of weights != 1).
Tensor apply_feature_head_weighted(Tape& tape, Tensor basis, Tensor weight_sum,
                                   ParamStore& store, const std::string& prefix);

}  // namespace erl
