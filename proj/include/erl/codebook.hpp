#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "erl/tensor.hpp"

namespace erl {

constexpr int kAudioDim = 29;

enum class SeqKind { Expression, DeltaPose };

// Motion coefficient track; dim 53 for expression, 6 for pose deltas.
struct CoeffSequence {
  SeqKind kind = SeqKind::Expression;
  int t = 0;
  int dim = 0;
  std::vector<float> frames;              // t*dim row-major
  std::array<float, 6> first_pose{};      // delta_pose kind
  std::array<float, 5> emotion{1, 0, 0, 0, 0};  // expression kind, one-hot
  float fps = 25.0f;

  void validate() const;
};

struct AudioFeatureSeq {
  int n = 0;
  std::vector<float> features;  // n*kAudioDim
};

struct VqConfig {
  int book_size = 64;   // K
  int code_dim = 64;    // d
  int tau = 1;          // codes per frame
  int hidden = 64;      // temporal net width
  int style_dim = 64;   // d_s
};

// Nearest-entry lookup with straight-through gradient. Returns
// (quantized = codes + sg(entry - codes), selected = entries with gradient
// to the book, indices). Ties break to the lowest index.
struct QuantizeResult {
  Tensor quantized;
  Tensor selected;
  std::vector<int> indices;
};
QuantizeResult quantize_nearest(Tape& tape, Tensor codes, Tensor book);

// Temporal encoder/decoder block: 3-tap conv over time, one single-head
// self-attention layer with residual, linear head.
void init_temporal_net(ParamStore& store, const std::string& prefix,
                       int in_dim, int hidden, int out_dim, Rng& rng);
Tensor temporal_net_forward(Tape& tape, Tensor x, ParamStore& store,
                            const std::string& prefix);

// Conditional VQ autoencoder over one sequence kind. Parameter prefixes:
// "exp_vq" and "pose_vq".
void init_vq(ParamStore& store, const std::string& prefix, SeqKind kind,
             const VqConfig& cfg, Rng& rng);

struct VqForward {
  Tensor recon;      // [t,dim]
  Tensor codes;      // encoder output X_hat [T,d]
  Tensor selected;   // chosen book entries X [T,d]
  std::vector<int> indices;
};
VqForward vq_autoencode(Tape& tape, const CoeffSequence& seq,
                        ParamStore& store, const std::string& prefix,
                        const VqConfig& cfg);

// |z - z_hat|^2 + |sg[X_hat] - X|^2 + |sg[X] - X_hat|^2, each mean-reduced.
Tensor vq_loss(Tensor z, Tensor z_hat, Tensor codes, Tensor selected);

// Pose deltas: deltas[i] = poses[i+1] - poses[i]; decode is the running sum.
std::pair<std::array<float, 6>, std::vector<float>> delta_encode(
    const std::vector<float>& poses);
std::vector<float> delta_decode(const std::array<float, 6>& first_pose,
                                const std::vector<float>& deltas);

// Deterministic stand-in audio features: phoneme-like index track plus
// seeded phases, n frames of kAudioDim values.
AudioFeatureSeq synth_audio_features(uint64_t seed, int n);

// Mark the VQ decoders and codebooks non-trainable for the ADF stage.
void freeze_vq_stage(ParamStore& store);

void init_adf(ParamStore& store, const VqConfig& cfg, Rng& rng);

struct AdfOutputs {
  Tensor exp;        // [n,53]
  Tensor dpose;      // [n,6]
  Tensor style_exp;  // [1,style_dim]
  Tensor style_pose; // [1,style_dim]
};
// Audio + style reference -> coefficient sequences through the frozen
// codebooks and decoders. Throws if the frozen stage was left trainable.
AdfOutputs adf_generate(Tape& tape, const AudioFeatureSeq& audio,
                        const CoeffSequence& style_exp,
                        const CoeffSequence& style_pose, ParamStore& store,
                        const VqConfig& cfg);

Tensor flame_loss(Tensor pred_exp, Tensor gt_exp, Tensor pred_dpose,
                  Tensor gt_dpose);

// 1 - cosine alignment with an alpha-guarded denominator.
Tensor contrastive_loss(Tensor e_m, Tensor e_a, float alpha);

// Fixed seeded random projection to embed_dim, used for the contrastive
// embeddings at desk scale.
Tensor random_projection(Tape& tape, Tensor x, uint64_t seed, int embed_dim);

Tensor adf_total_loss(Tensor l_flame, Tensor l_contrastive);

// Centered moving average over time, window w (odd), edges clamped.
std::vector<float> moving_average(const std::vector<float>& frames, int t,
                                  int dim, int window);

// Text round-trip: keys kind, fps, dims, frames, first_pose, emotion.
void save_sequence(const std::string& path, const CoeffSequence& seq);
CoeffSequence load_sequence(const std::string& path);

}  // namespace erl
