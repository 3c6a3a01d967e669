#pragma once

#include <string>
#include <vector>

#include "erl/fusion.hpp"
#include "erl/renderer.hpp"
#include "erl/synthetic.hpp"
#include "erl/tensor.hpp"

namespace erl {

enum class OptimizerKind { Adam, AdamW };

struct TrainConfig {
  float lr = 1e-4f;       // renderer stage
  float lr_adf = 2e-5f;   // audio-to-coefficients stage
  OptimizerKind optimizer = OptimizerKind::AdamW;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.0f;
  int iters = 2000;
  uint64_t seed = 0;
  float beta_h = 1.0f;
  float beta_s = 1.0f;
  float perceptual_weight = 1.0f;
  bool deform_enabled = true;
  bool perceptual_enabled = true;
  bool dual_branch = true;

  void validate() const;
};

// Renderer-side sizes that are configuration, not contract.
struct PipelineConfig {
  int n_samples = 16;
  float t_near = 0.5f;
  float t_far = 2.5f;
  float fusion_alpha = 1e-6f;
  int upsample_blocks = 1;
};

// 3x3 stride-2 convolution with fixed weights [3,3,c_in,c_out], pad 1.
template <typename T>
TensorT<T> conv3x3s2_const(TensorT<T> a, const std::vector<float>& weights,
                           int c_out) {
  const Shape& as = a.shape();
  if (as.size() != 3)
    throw TensorError("conv3x3s2_const: need [h,w,c], got " + shape_str(as));
  int h = as[0], w = as[1], c = as[2];
  if (static_cast<int>(weights.size()) != 9 * c * c_out)
    throw TensorError("conv3x3s2_const: weight count mismatch");
  int oh = (h + 1) / 2, ow = (w + 1) / 2;
  const auto& v = a.value();
  std::vector<T> out(static_cast<size_t>(oh) * ow * c_out, T(0));
  auto wj = [&](int u, int t2, int ci, int co) {
    return weights[((u * 3 + t2) * c + ci) * c_out + co];
  };
  for (int i = 0; i < oh; ++i)
    for (int j = 0; j < ow; ++j)
      for (int u = 0; u < 3; ++u) {
        int si = 2 * i + u - 1;
        if (si < 0 || si >= h) continue;
        for (int t2 = 0; t2 < 3; ++t2) {
          int sj = 2 * j + t2 - 1;
          if (sj < 0 || sj >= w) continue;
          for (int ci = 0; ci < c; ++ci) {
            T x = v[(static_cast<size_t>(si) * w + sj) * c + ci];
            for (int co = 0; co < c_out; ++co)
              out[(static_cast<size_t>(i) * ow + j) * c_out + co] +=
                  static_cast<T>(wj(u, t2, ci, co)) * x;
          }
        }
      }
  TapeT<T>& t = *a.tape();
  int aid = a.id();
  std::vector<float> wc = weights;
  int id = t.emplace({oh, ow, c_out}, std::move(out), {aid},
                     [=](TapeT<T>& tp, int self) {
    const auto& g = tp.node(self).grad;
    auto& ga = tp.grad_buf(aid);
    auto wj2 = [&](int u, int t2, int ci, int co) {
      return wc[((u * 3 + t2) * c + ci) * c_out + co];
    };
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j)
        for (int u = 0; u < 3; ++u) {
          int si = 2 * i + u - 1;
          if (si < 0 || si >= h) continue;
          for (int t2 = 0; t2 < 3; ++t2) {
            int sj = 2 * j + t2 - 1;
            if (sj < 0 || sj >= w) continue;
            for (int ci = 0; ci < c; ++ci)
              for (int co = 0; co < c_out; ++co)
                ga[(static_cast<size_t>(si) * w + sj) * c + ci] +=
                    static_cast<T>(wj2(u, t2, ci, co)) *
                    g[(static_cast<size_t>(i) * ow + j) * c_out + co];
          }
        }
  });
  return TensorT<T>(&t, id);
}

// mean((beta_h*M_h + beta_s*M_s) * (render-gt)^2) over all pixels/channels.
template <typename T>
TensorT<T> photometric_loss(TensorT<T> render, TensorT<T> gt, TensorT<T> m_h,
                            TensorT<T> m_s, T beta_h, T beta_s) {
  const Shape& rs = render.shape();
  if (rs.size() != 3 || rs[2] != 3 || gt.shape() != rs)
    throw TensorError("photometric_loss: render " + shape_str(rs) + " vs gt " +
                      shape_str(gt.shape()));
  Shape ms{rs[0], rs[1], 1};
  if (m_h.shape() != ms || m_s.shape() != ms)
    throw TensorError("photometric_loss: masks must be " + shape_str(ms));
  TensorT<T> weight = add(scale(m_h, beta_h), scale(m_s, beta_s));
  return mean(mul(weight, square(sub(render, gt))));
}

// Multi-scale feature matching through 3 frozen seeded random conv stages.
template <typename T>
TensorT<T> perceptual_proxy_loss(TensorT<T> render, TensorT<T> gt,
                                 uint64_t seed) {
  if (render.shape() != gt.shape() || render.shape().size() != 3)
    throw TensorError("perceptual_proxy_loss: shape mismatch " +
                      shape_str(render.shape()) + " vs " +
                      shape_str(gt.shape()));
  Rng rng(seed ^ 0x70726f7879ull);
  int chans[4] = {render.shape()[2], 8, 8, 8};
  TensorT<T> a = render, b = gt, loss;
  for (int s = 0; s < 3; ++s) {
    int ci = chans[s], co = chans[s + 1];
    std::vector<float> w(static_cast<size_t>(9) * ci * co);
    float bound = 1.0f / std::sqrt(9.0f * ci);
    for (auto& x : w) x = rng.uniform(-bound, bound);
    a = conv3x3s2_const(a, w, co);
    b = conv3x3s2_const(b, w, co);
    TensorT<T> term = mse(a, b);
    loss = s == 0 ? term : add(loss, term);
    a = relu(a);
    b = relu(b);
  }
  return loss;
}

// Bias-corrected Adam step over every trainable parameter; AdamW applies
// decoupled weight decay. Gradients must have been populated by backward().
void adam_step(ParamStore& store, const TrainConfig& cfg, float lr);

struct LossRow {
  int iter = 0;
  float pho = 0.0f;
  float per = 0.0f;
  float total = 0.0f;
};

void write_loss_csv(const std::string& path, const std::vector<LossRow>& rows);

// Render one scene frame through both branches, fusion, upsampling and
// RGBA composition. Returns the image at scene.out_size resolution.
Tensor render_scene_frame(Tape& tape, const SyntheticScene& scene, int frame,
                          ParamStore& store, const FieldConfig& fcfg,
                          const PipelineConfig& pcfg, bool deform_enabled,
                          bool dual_branch);

void init_dbf_nerf(ParamStore& store, const FieldConfig& fcfg,
                   const PipelineConfig& pcfg, Rng& rng);

// Round-robin full-frame training; logs every `log_every` iterations.
std::vector<LossRow> train_dbf_nerf(const SyntheticScene& scene,
                                    ParamStore& store, const FieldConfig& fcfg,
                                    const PipelineConfig& pcfg,
                                    const TrainConfig& cfg, int log_every = 50);

// Little-endian container: magic "ERLC", version, entry count, then per
// entry name/rank/dims/float payload. Optimizer moments and step counters
// ride along as suffixed entries.
void save_checkpoint(const ParamStore& store, const std::string& path);
void load_checkpoint(ParamStore& store, const std::string& path);

}  // namespace erl
