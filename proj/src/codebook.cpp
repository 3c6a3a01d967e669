#include "erl/codebook.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace erl {

void CoeffSequence::validate() const {
  if (t < 1) throw TensorError("CoeffSequence: t must be >= 1");
  int want = kind == SeqKind::Expression ? 53 : 6;
  if (dim != want)
    throw TensorError("CoeffSequence: dim " + std::to_string(dim) +
                      " does not match kind (want " + std::to_string(want) + ")");
  if (static_cast<int>(frames.size()) != t * dim)
    throw TensorError("CoeffSequence: frames size " +
                      std::to_string(frames.size()) + " != t*dim");
  if (kind == SeqKind::Expression) {
    int ones = 0;
    for (float e : emotion) {
      if (e != 0.0f && e != 1.0f)
        throw TensorError("CoeffSequence: emotion must be one-hot");
      if (e == 1.0f) ++ones;
    }
    if (ones != 1) throw TensorError("CoeffSequence: emotion must be one-hot");
  }
}

QuantizeResult quantize_nearest(Tape& tape, Tensor codes, Tensor book) {
  const Shape& cs = codes.shape();
  const Shape& bs = book.shape();
  if (cs.size() != 2 || bs.size() != 2 || cs[1] != bs[1])
    throw TensorError("quantize_nearest: codes " + shape_str(cs) +
                      " vs book " + shape_str(bs));
  int n = cs[0], d = cs[1], k = bs[0];
  const auto& cv = codes.value();
  const auto& bv = book.value();
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int j = 0; j < k; ++j) {
      double dist = 0.0;
      for (int m = 0; m < d; ++m) {
        double diff = static_cast<double>(cv[i * d + m]) -
                      static_cast<double>(bv[j * d + m]);
        dist += diff * diff;
      }
      if (dist < best) {
        best = dist;
        arg = j;
      }
    }
    idx[i] = arg;
  }
  Tensor selected = gather_rows(book, idx);
  Tensor quantized = add(codes, stop_gradient(sub(selected, codes)));
  return {quantized, selected, std::move(idx)};
}

void init_temporal_net(ParamStore& store, const std::string& prefix,
                       int in_dim, int hidden, int out_dim, Rng& rng) {
  init_linear(store, prefix + ".conv", 3 * in_dim, hidden, rng);
  init_linear(store, prefix + ".q", hidden, hidden, rng);
  init_linear(store, prefix + ".k", hidden, hidden, rng);
  init_linear(store, prefix + ".v", hidden, hidden, rng);
  init_linear(store, prefix + ".out", hidden, out_dim, rng);
}

Tensor temporal_net_forward(Tape& tape, Tensor x, ParamStore& store,
                            const std::string& prefix) {
  const Shape& xs = x.shape();
  if (xs.size() != 2)
    throw TensorError("temporal_net_forward: need [t,c], got " + shape_str(xs));
  int t = xs[0], c = xs[1];
  Tensor zero = tape.constant({1, c}, std::vector<float>(c, 0.0f));
  Tensor prev = t == 1 ? zero : concat<float>({zero, slice(x, 0, 0, t - 1)}, 0);
  Tensor next = t == 1 ? zero : concat<float>({slice(x, 0, 1, t - 1), zero}, 0);
  Tensor cat = concat<float>({prev, x, next}, 1);
  auto lin = [&](Tensor in, const std::string& name) {
    return linear(in, tape.leaf(store.at(prefix + name + ".w")),
                  tape.leaf(store.at(prefix + name + ".b")));
  };
  Tensor h = relu(lin(cat, ".conv"));
  int hd = h.shape()[1];
  Tensor q = lin(h, ".q"), k = lin(h, ".k"), v = lin(h, ".v");
  Tensor scores = scale(matmul(q, transpose2(k)), 1.0f / std::sqrt(float(hd)));
  Tensor attn = matmul(softmax(scores, 1), v);
  h = add(h, attn);
  return lin(h, ".out");
}

namespace {

int cond_dim(SeqKind kind) { return kind == SeqKind::Expression ? 5 : 6; }
int coeff_dim(SeqKind kind) { return kind == SeqKind::Expression ? 53 : 6; }

Tensor cond_rows(Tape& tape, const CoeffSequence& seq, int rows) {
  int cd = cond_dim(seq.kind);
  std::vector<float> v;
  if (seq.kind == SeqKind::Expression)
    v.assign(seq.emotion.begin(), seq.emotion.end());
  else
    v.assign(seq.first_pose.begin(), seq.first_pose.end());
  return broadcast_to(tape.constant({1, cd}, std::move(v)), {rows, cd});
}

Tensor vq_decode(Tape& tape, Tensor quantized, Tensor cond, ParamStore& store,
                 const std::string& prefix, const VqConfig& cfg) {
  int t = cond.shape()[0];
  Tensor codes_per_frame = reshape(quantized, {t, cfg.tau * cfg.code_dim});
  Tensor in = concat<float>({codes_per_frame, cond}, 1);
  return temporal_net_forward(tape, in, store, prefix + ".dec");
}

}  // namespace

void init_vq(ParamStore& store, const std::string& prefix, SeqKind kind,
             const VqConfig& cfg, Rng& rng) {
  int dim = coeff_dim(kind), cd = cond_dim(kind);
  init_temporal_net(store, prefix + ".enc", dim + cd, cfg.hidden,
                    cfg.tau * cfg.code_dim, rng);
  init_temporal_net(store, prefix + ".dec", cfg.tau * cfg.code_dim + cd,
                    cfg.hidden, dim, rng);
  Parameter& book = store.create(prefix + ".book", {cfg.book_size, cfg.code_dim});
  init_uniform(book, rng, 1.0f / std::sqrt(float(cfg.code_dim)));
}

VqForward vq_autoencode(Tape& tape, const CoeffSequence& seq, ParamStore& store,
                        const std::string& prefix, const VqConfig& cfg) {
  seq.validate();
  std::string want = seq.kind == SeqKind::Expression ? "exp" : "pose";
  if (prefix.rfind(want, 0) != 0)
    throw TensorError("vq_autoencode: sequence kind does not match model '" +
                      prefix + "'");
  Tensor x = tape.constant({seq.t, seq.dim}, seq.frames);
  Tensor cond = cond_rows(tape, seq, seq.t);
  Tensor enc_in = concat<float>({x, cond}, 1);
  Tensor codes = reshape(temporal_net_forward(tape, enc_in, store, prefix + ".enc"),
                         {seq.t * cfg.tau, cfg.code_dim});
  QuantizeResult q =
      quantize_nearest(tape, codes, tape.leaf(store.at(prefix + ".book")));
  Tensor recon = vq_decode(tape, q.quantized, cond, store, prefix, cfg);
  return {recon, codes, q.selected, std::move(q.indices)};
}

Tensor vq_loss(Tensor z, Tensor z_hat, Tensor codes, Tensor selected) {
  Tensor rec = mse(z_hat, z);
  Tensor book_term = mse(selected, stop_gradient(codes));
  Tensor commit = mse(stop_gradient(selected), codes);
  return add(add(rec, book_term), commit);
}

std::pair<std::array<float, 6>, std::vector<float>> delta_encode(
    const std::vector<float>& poses) {
  if (poses.empty() || poses.size() % 6 != 0)
    throw TensorError("delta_encode: need a nonempty t*6 pose list");
  int t = static_cast<int>(poses.size()) / 6;
  std::array<float, 6> first{};
  std::copy(poses.begin(), poses.begin() + 6, first.begin());
  std::vector<float> deltas(static_cast<size_t>(t - 1) * 6);
  // error-feedback against the decoder's running sum, so the cumulative
  // decode stays within one rounding step of the input for any track length
  std::array<float, 6> sim = first;
  for (int i = 0; i + 1 < t; ++i)
    for (int j = 0; j < 6; ++j) {
      float d = poses[(i + 1) * 6 + j] - sim[j];
      deltas[i * 6 + j] = d;
      sim[j] += d;
    }
  return {first, std::move(deltas)};
}

std::vector<float> delta_decode(const std::array<float, 6>& first_pose,
                                const std::vector<float>& deltas) {
  if (deltas.size() % 6 != 0)
    throw TensorError("delta_decode: deltas must be (t-1)*6");
  int t = static_cast<int>(deltas.size()) / 6 + 1;
  std::vector<float> poses(static_cast<size_t>(t) * 6);
  std::copy(first_pose.begin(), first_pose.end(), poses.begin());
  for (int i = 1; i < t; ++i)
    for (int j = 0; j < 6; ++j)
      poses[i * 6 + j] = poses[(i - 1) * 6 + j] + deltas[(i - 1) * 6 + j];
  return poses;
}

AudioFeatureSeq synth_audio_features(uint64_t seed, int n) {
  if (n < 1) throw TensorError("synth_audio_features: n must be >= 1");
  Rng rng(seed);
  std::array<float, 8> phase;
  for (auto& p : phase) p = rng.uniform(0.0f, 6.2831853f);
  AudioFeatureSeq out;
  out.n = n;
  out.features.resize(static_cast<size_t>(n) * kAudioDim);
  for (int i = 0; i < n; ++i) {
    int p = (i / 4) % 8;  // phoneme-like index track
    for (int j = 0; j < kAudioDim; ++j)
      out.features[i * kAudioDim + j] =
          std::sin(0.37f * j + phase[p] + 0.11f * i) +
          0.25f * std::cos(0.05f * i * (j + 1));
  }
  return out;
}

void freeze_vq_stage(ParamStore& store) {
  for (auto& [name, p] : store.all()) {
    bool vq = name.rfind("exp_vq.", 0) == 0 || name.rfind("pose_vq.", 0) == 0;
    if (!vq) continue;
    if (name.find(".dec.") != std::string::npos ||
        name.find(".book") != std::string::npos)
      p->trainable = false;
  }
}

void init_adf(ParamStore& store, const VqConfig& cfg, Rng& rng) {
  init_temporal_net(store, "adf.se", 53, cfg.hidden, cfg.style_dim, rng);
  init_temporal_net(store, "adf.sp", 6, cfg.hidden, cfg.style_dim, rng);
  init_temporal_net(store, "adf.dse", kAudioDim + cfg.style_dim + 5,
                    cfg.hidden, cfg.tau * cfg.code_dim, rng);
  init_temporal_net(store, "adf.dsp", kAudioDim + cfg.style_dim + 6,
                    cfg.hidden, cfg.tau * cfg.code_dim, rng);
}

namespace {

Tensor mean_rows(Tensor x) {
  int t = x.shape()[0], c = x.shape()[1];
  return scale(reshape(sum_axis(x, 0), {1, c}), 1.0f / float(t));
}

}  // namespace

AdfOutputs adf_generate(Tape& tape, const AudioFeatureSeq& audio,
                        const CoeffSequence& style_exp,
                        const CoeffSequence& style_pose, ParamStore& store,
                        const VqConfig& cfg) {
  if (audio.n < 1 ||
      static_cast<int>(audio.features.size()) != audio.n * kAudioDim)
    throw TensorError("adf_generate: bad audio feature block");
  style_exp.validate();
  style_pose.validate();
  for (auto& [name, p] : store.all()) {
    bool frozen_part = (name.rfind("exp_vq.", 0) == 0 ||
                        name.rfind("pose_vq.", 0) == 0) &&
                       (name.find(".dec.") != std::string::npos ||
                        name.find(".book") != std::string::npos);
    if (frozen_part && p->trainable)
      throw TensorError("adf_generate: '" + name +
                        "' must be frozen before the ADF stage");
  }
  int n = audio.n;
  Tensor a = tape.constant({n, kAudioDim}, audio.features);

  Tensor se_seq = tape.constant({style_exp.t, 53}, style_exp.frames);
  Tensor s_exp = mean_rows(temporal_net_forward(tape, se_seq, store, "adf.se"));
  Tensor sp_seq = tape.constant({style_pose.t, 6}, style_pose.frames);
  Tensor s_pose = mean_rows(temporal_net_forward(tape, sp_seq, store, "adf.sp"));

  Tensor emo = cond_rows(tape, style_exp, n);
  Tensor pose0 = cond_rows(tape, style_pose, n);

  Tensor dse_in = concat<float>(
      {a, broadcast_to(s_exp, {n, cfg.style_dim}), emo}, 1);
  Tensor exp_codes = reshape(temporal_net_forward(tape, dse_in, store, "adf.dse"),
                             {n * cfg.tau, cfg.code_dim});
  QuantizeResult qe = quantize_nearest(tape, exp_codes,
                                       tape.leaf(store.at("exp_vq.book")));
  Tensor exp_out = vq_decode(tape, qe.quantized, emo, store, "exp_vq", cfg);

  Tensor dsp_in = concat<float>(
      {a, broadcast_to(s_pose, {n, cfg.style_dim}), pose0}, 1);
  Tensor pose_codes = reshape(temporal_net_forward(tape, dsp_in, store, "adf.dsp"),
                              {n * cfg.tau, cfg.code_dim});
  QuantizeResult qp = quantize_nearest(tape, pose_codes,
                                       tape.leaf(store.at("pose_vq.book")));
  Tensor dpose_out = vq_decode(tape, qp.quantized, pose0, store, "pose_vq", cfg);

  return {exp_out, dpose_out, s_exp, s_pose};
}

Tensor flame_loss(Tensor pred_exp, Tensor gt_exp, Tensor pred_dpose,
                  Tensor gt_dpose) {
  if (pred_exp.shape() != gt_exp.shape() ||
      pred_dpose.shape() != gt_dpose.shape())
    throw TensorError("flame_loss: prediction/target length mismatch");
  return add(mse(pred_exp, gt_exp), mse(pred_dpose, gt_dpose));
}

Tensor contrastive_loss(Tensor e_m, Tensor e_a, float alpha) {
  if (alpha <= 0.0f)
    throw TensorError("contrastive_loss: alpha must be positive");
  if (e_m.size() != e_a.size())
    throw TensorError("contrastive_loss: embedding size mismatch");
  Tensor dot = sum(mul(e_m, e_a));
  Tensor nm = sqrt(sum(square(e_m)));
  Tensor na = sqrt(sum(square(e_a)));
  Tensor denom = add_scalar(mul(nm, na), alpha);
  return add_scalar(neg(div(dot, denom)), 1.0f);
}

Tensor random_projection(Tape& tape, Tensor x, uint64_t seed, int embed_dim) {
  const Shape& xs = x.shape();
  if (xs.size() != 2)
    throw TensorError("random_projection: need [t,c], got " + shape_str(xs));
  int c = xs[1];
  Rng rng(seed ^ (static_cast<uint64_t>(c) * 0x9e3779b9ull) ^
          static_cast<uint64_t>(embed_dim));
  std::vector<float> w(static_cast<size_t>(c) * embed_dim);
  float bound = 1.0f / std::sqrt(float(c));
  for (auto& v : w) v = rng.uniform(-bound, bound);
  Tensor proj = tape.constant({c, embed_dim}, std::move(w));
  return matmul(mean_rows(x), proj);
}

Tensor adf_total_loss(Tensor l_flame, Tensor l_contrastive) {
  return add(l_flame, l_contrastive);
}

std::vector<float> moving_average(const std::vector<float>& frames, int t,
                                  int dim, int window) {
  if (window < 1 || window % 2 == 0)
    throw TensorError("moving_average: window must be odd and positive");
  if (static_cast<int>(frames.size()) != t * dim)
    throw TensorError("moving_average: frames size mismatch");
  int half = window / 2;
  std::vector<float> out(frames.size());
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < dim; ++j) {
      double acc = 0.0;
      for (int k = -half; k <= half; ++k) {
        int idx = std::min(std::max(i + k, 0), t - 1);
        acc += frames[idx * dim + j];
      }
      out[i * dim + j] = static_cast<float>(acc / window);
    }
  return out;
}

void save_sequence(const std::string& path, const CoeffSequence& seq) {
  seq.validate();
  std::ofstream f(path);
  if (!f) throw TensorError("save_sequence: cannot open '" + path + "'");
  f << "kind " << (seq.kind == SeqKind::Expression ? "expression" : "delta_pose")
    << "\n";
  f << "fps " << seq.fps << "\n";
  f << "dims " << seq.dim << "\n";
  f << "frames " << seq.t << "\n";
  f.precision(9);
  for (int i = 0; i < seq.t; ++i) {
    for (int j = 0; j < seq.dim; ++j)
      f << (j ? " " : "") << seq.frames[i * seq.dim + j];
    f << "\n";
  }
  if (seq.kind == SeqKind::DeltaPose) {
    f << "first_pose";
    for (float v : seq.first_pose) f << " " << v;
    f << "\n";
  } else {
    f << "emotion";
    for (float v : seq.emotion) f << " " << v;
    f << "\n";
  }
  if (!f) throw TensorError("save_sequence: write failed for '" + path + "'");
}

CoeffSequence load_sequence(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw TensorError("load_sequence: cannot open '" + path + "'");
  CoeffSequence seq;
  std::string key;
  bool have_kind = false, have_dims = false, have_frames = false;
  while (f >> key) {
    if (key == "kind") {
      std::string v;
      f >> v;
      if (v == "expression") seq.kind = SeqKind::Expression;
      else if (v == "delta_pose") seq.kind = SeqKind::DeltaPose;
      else throw TensorError("load_sequence: unknown kind '" + v + "'");
      have_kind = true;
    } else if (key == "fps") {
      f >> seq.fps;
    } else if (key == "dims") {
      f >> seq.dim;
      have_dims = true;
    } else if (key == "frames") {
      if (!have_dims)
        throw TensorError("load_sequence: 'frames' before 'dims'");
      f >> seq.t;
      seq.frames.resize(static_cast<size_t>(seq.t) * seq.dim);
      for (auto& v : seq.frames)
        if (!(f >> v))
          throw TensorError("load_sequence: truncated frame data in '" + path +
                            "'");
      have_frames = true;
    } else if (key == "first_pose") {
      for (auto& v : seq.first_pose) f >> v;
    } else if (key == "emotion") {
      for (auto& v : seq.emotion) f >> v;
    } else {
      throw TensorError("load_sequence: unknown key '" + key + "' in '" + path +
                        "'");
    }
  }
  if (!have_kind || !have_dims || !have_frames)
    throw TensorError("load_sequence: missing kind/dims/frames in '" + path +
                      "'");
  seq.validate();
  return seq;
}

}  // namespace erl
