#include "erl/training.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace erl {

void TrainConfig::validate() const {
  if (lr <= 0.0f || lr_adf <= 0.0f)
    throw TensorError("TrainConfig: learning rates must be positive");
  if (beta1 < 0.0f || beta1 >= 1.0f || beta2 < 0.0f || beta2 >= 1.0f)
    throw TensorError("TrainConfig: betas must lie in [0,1)");
  if (eps <= 0.0f) throw TensorError("TrainConfig: eps must be positive");
  if (iters < 0) throw TensorError("TrainConfig: iters must be >= 0");
}

void adam_step(ParamStore& store, const TrainConfig& cfg, float lr) {
  for (auto& [name, p] : store.all()) {
    if (!p->trainable) continue;
    size_t n = p->value.size();
    if (p->grad.size() != n)
      throw TensorError("adam_step: no gradient for '" + name + "'");
    if (p->adam_m.size() != n) p->adam_m.assign(n, 0.0f);
    if (p->adam_v.size() != n) p->adam_v.assign(n, 0.0f);
    p->step += 1;
    float bc1 = 1.0f - std::pow(cfg.beta1, float(p->step));
    float bc2 = 1.0f - std::pow(cfg.beta2, float(p->step));
    for (size_t i = 0; i < n; ++i) {
      float g = p->grad[i];
      p->adam_m[i] = cfg.beta1 * p->adam_m[i] + (1.0f - cfg.beta1) * g;
      p->adam_v[i] = cfg.beta2 * p->adam_v[i] + (1.0f - cfg.beta2) * g * g;
      float mhat = p->adam_m[i] / bc1;
      float vhat = p->adam_v[i] / bc2;
      if (cfg.optimizer == OptimizerKind::AdamW)
        p->value[i] -= lr * cfg.weight_decay * p->value[i];
      p->value[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void write_loss_csv(const std::string& path, const std::vector<LossRow>& rows) {
  std::ofstream f(path);
  if (!f) throw TensorError("write_loss_csv: cannot open '" + path + "'");
  f << "iteration,L_pho,L_per,total\n";
  char buf[128];
  for (const LossRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", r.iter, r.pho, r.per,
                  r.total);
    f << buf;
  }
  if (!f) throw TensorError("write_loss_csv: write failed for '" + path + "'");
}

void init_dbf_nerf(ParamStore& store, const FieldConfig& fcfg,
                   const PipelineConfig& pcfg, Rng& rng) {
  init_head_field(store, "head", fcfg, rng);
  init_static_field(store, "static", fcfg, rng);
  init_deform_field(store, "deform", fcfg, rng);
  for (int b = 0; b < pcfg.upsample_blocks; ++b)
    init_upsample_block(store, "up" + std::to_string(b), fcfg.feature_dim, rng);
  init_compose_rgba(store, "img", fcfg.feature_dim, rng);
}

Tensor render_scene_frame(Tape& tape, const SyntheticScene& scene, int frame,
                          ParamStore& store, const FieldConfig& fcfg,
                          const PipelineConfig& pcfg, bool deform_enabled,
                          bool dual_branch) {
  if (frame < 0 || frame >= scene.n_frames)
    throw TensorError("render_scene_frame: frame index out of range");
  const SceneFrame& fr = scene.frames[frame];
  int ms = scene.map_size;

  RenderOptions ropt;
  ropt.n_samples = pcfg.n_samples;

  Camera cam_h = pose_to_camera(fr.motion.pose, scene.intrinsics, pcfg.t_near,
                                pcfg.t_far);
  std::vector<Ray> rays_h = generate_rays(cam_h, pcfg.t_near, pcfg.t_far);
  RenderedMaps head = render_feature_maps(tape, rays_h, ms, ms, fr.motion,
                                          Branch::Head, false, store, fcfg,
                                          ropt);

  Tensor feat, dens;
  if (dual_branch) {
    Camera cam0 = pose_to_camera(scene.frames[0].motion.pose, scene.intrinsics,
                                 pcfg.t_near, pcfg.t_far);
    std::vector<Ray> rays_s = generate_rays(cam0, pcfg.t_near, pcfg.t_far);
    RenderedMaps stat = render_feature_maps(tape, rays_s, ms, ms, fr.motion,
                                            Branch::Static, deform_enabled,
                                            store, fcfg, ropt);
    Tensor m_h = tape.constant({ms, ms, 1}, fr.mask_head);
    auto [f_g, d_g] = fuse_maps(
        reshape(head.feature, {ms, ms, fcfg.feature_dim}),
        reshape(head.density, {ms, ms, 1}),
        reshape(stat.feature, {ms, ms, fcfg.feature_dim}),
        reshape(stat.density, {ms, ms, 1}), m_h, pcfg.fusion_alpha);
    feat = f_g;
    dens = d_g;
  } else {
    feat = reshape(head.feature, {ms, ms, fcfg.feature_dim});
    dens = reshape(head.density, {ms, ms, 1});
  }

  BlurKernel kernel = BlurKernel::binomial4();
  for (int b = 0; b < pcfg.upsample_blocks; ++b)
    feat = upsample_block(tape, feat, store, "up" + std::to_string(b), kernel);

  int os = ms << pcfg.upsample_blocks;
  if (os != scene.out_size)
    throw TensorError("render_scene_frame: upsample blocks produce " +
                      std::to_string(os) + ", scene expects " +
                      std::to_string(scene.out_size));
  Tensor bg = tape.constant({os, os, 3}, scene.background);
  return compose_rgba(tape, feat, bg, store, "img");
}

std::vector<LossRow> train_dbf_nerf(const SyntheticScene& scene,
                                    ParamStore& store, const FieldConfig& fcfg,
                                    const PipelineConfig& pcfg,
                                    const TrainConfig& cfg, int log_every) {
  cfg.validate();
  if (scene.n_frames < 1) throw TensorError("train_dbf_nerf: empty scene");
  std::vector<LossRow> rows;
  int gs = scene.gt_size;
  for (int it = 0; it < cfg.iters; ++it) {
    int f = it % scene.n_frames;
    const SceneFrame& fr = scene.frames[f];
    Tape tape;
    Tensor image = render_scene_frame(tape, scene, f, store, fcfg, pcfg,
                                      cfg.deform_enabled, cfg.dual_branch);
    while (image.shape()[0] > gs) image = avg_pool2(image);
    Tensor gt = tape.constant({gs, gs, 3}, fr.gt);
    Tensor m_h = tape.constant({gs, gs, 1}, fr.mask_head);
    Tensor m_s = tape.constant({gs, gs, 1}, fr.mask_static);
    Tensor pho = photometric_loss(image, gt, m_h, m_s, cfg.beta_h, cfg.beta_s);
    Tensor total = pho;
    float per_val = 0.0f;
    if (cfg.perceptual_enabled) {
      Tensor per = perceptual_proxy_loss(image, gt, cfg.seed);
      per_val = per.scalar();
      total = add(pho, scale(per, cfg.perceptual_weight));
    }
    float total_val = total.scalar();
    if (!std::isfinite(total_val))
      throw TensorError("train_dbf_nerf: non-finite loss at iteration " +
                        std::to_string(it) + " (pho=" +
                        std::to_string(pho.scalar()) + ", per=" +
                        std::to_string(per_val) + ")");
    store.zero_grads();
    tape.backward(total);
    adam_step(store, cfg, cfg.lr);
    if (it % log_every == 0 || it + 1 == cfg.iters)
      rows.push_back({it, pho.scalar(), per_val, total_val});
  }
  return rows;
}

namespace {

constexpr uint32_t kCheckpointMagic = 0x434c5245;  // "ERLC" little-endian
constexpr uint32_t kCheckpointVersion = 1;

void put_u32(std::ofstream& f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::ifstream& f, const std::string& path) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (f.gcount() != 4)
    throw TensorError("load_checkpoint: truncated file '" + path +
                      "' at offset " + std::to_string(f.tellg() == -1
                                                          ? -1
                                                          : long(f.tellg())));
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

void put_entry(std::ofstream& f, const std::string& name, const Shape& shape,
               const std::vector<float>& data) {
  put_u32(f, static_cast<uint32_t>(name.size()));
  f.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(f, static_cast<uint32_t>(shape.size()));
  for (int d : shape) put_u32(f, static_cast<uint32_t>(d));
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(float)));
}

struct RawEntry {
  Shape shape;
  std::vector<float> data;
};

}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw TensorError("save_checkpoint: cannot open '" + path + "'");
  put_u32(f, kCheckpointMagic);
  put_u32(f, kCheckpointVersion);
  uint32_t count = 0;
  for (const auto& [name, p] : store.all()) count += 4;
  put_u32(f, count);
  for (const auto& [name, p] : store.all()) {
    put_entry(f, name, p->shape, p->value);
    std::vector<float> m = p->adam_m, v = p->adam_v;
    if (m.size() != p->value.size()) m.assign(p->value.size(), 0.0f);
    if (v.size() != p->value.size()) v.assign(p->value.size(), 0.0f);
    put_entry(f, name + "#m", p->shape, m);
    put_entry(f, name + "#v", p->shape, v);
    put_entry(f, name + "#meta", {2},
              {static_cast<float>(p->step), p->trainable ? 1.0f : 0.0f});
  }
  if (!f) throw TensorError("save_checkpoint: write failed for '" + path + "'");
}

void load_checkpoint(ParamStore& store, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TensorError("load_checkpoint: cannot open '" + path + "'");
  if (get_u32(f, path) != kCheckpointMagic)
    throw TensorError("load_checkpoint: bad magic in '" + path +
                      "' at offset 0");
  uint32_t version = get_u32(f, path);
  if (version != kCheckpointVersion)
    throw TensorError("load_checkpoint: unsupported version " +
                      std::to_string(version) + " at offset 4");
  uint32_t count = get_u32(f, path);
  std::map<std::string, RawEntry> entries;
  for (uint32_t e = 0; e < count; ++e) {
    long name_off = long(f.tellg());
    uint32_t len = get_u32(f, path);
    if (len == 0 || len > 4096)
      throw TensorError("load_checkpoint: implausible name length at offset " +
                        std::to_string(name_off));
    std::string name(len, '\0');
    f.read(name.data(), len);
    if (f.gcount() != static_cast<std::streamsize>(len))
      throw TensorError("load_checkpoint: truncated name at offset " +
                        std::to_string(name_off));
    uint32_t rank = get_u32(f, path);
    if (rank > 8)
      throw TensorError("load_checkpoint: implausible rank for '" + name +
                        "' at offset " + std::to_string(name_off));
    RawEntry entry;
    int64_t n = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      uint32_t dim = get_u32(f, path);
      entry.shape.push_back(static_cast<int>(dim));
      n *= dim;
    }
    entry.data.resize(static_cast<size_t>(n));
    long data_off = long(f.tellg());
    f.read(reinterpret_cast<char*>(entry.data.data()),
           static_cast<std::streamsize>(n * sizeof(float)));
    if (f.gcount() != static_cast<std::streamsize>(n * sizeof(float)))
      throw TensorError("load_checkpoint: truncated payload for '" + name +
                        "' at offset " + std::to_string(data_off));
    entries.emplace(std::move(name), std::move(entry));
  }

  ParamStore fresh;
  for (auto& [name, entry] : entries) {
    if (name.find('#') != std::string::npos) continue;
    Parameter& p = fresh.create(name, entry.shape);
    p.value = entry.data;
    auto m = entries.find(name + "#m");
    auto v = entries.find(name + "#v");
    auto meta = entries.find(name + "#meta");
    if (m == entries.end() || v == entries.end() || meta == entries.end() ||
        meta->second.data.size() != 2)
      throw TensorError("load_checkpoint: missing optimizer state for '" +
                        name + "'");
    p.adam_m = m->second.data;
    p.adam_v = v->second.data;
    p.step = static_cast<int64_t>(meta->second.data[0]);
    p.trainable = meta->second.data[1] != 0.0f;
  }
  store = std::move(fresh);
}

}  // namespace erl
