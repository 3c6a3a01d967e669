#include <CLI11.hpp>
#include <cblas.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>

#include "erl/config.hpp"
#include "erl/gradcheck.hpp"
#include "erl/training.hpp"

using namespace erl;
namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  uint64_t seed = 0;
  bool seed_set = false;
  int iters = -1;
  std::vector<std::string> ablate;
};

void add_common(CLI::App* cmd, CommonFlags& fl) {
  cmd->add_option("--config", fl.config_path, "run configuration file");
  cmd->add_option("--out", fl.out_dir, "output directory");
  cmd->add_option("--seed", fl.seed, "override every random seed")
      ->each([&fl](const std::string&) { fl.seed_set = true; });
  cmd->add_option("--iters", fl.iters, "override the iteration count");
  cmd->add_option("--ablate", fl.ablate,
                  "disable a component: deform, perceptual, dual-branch")
      ->check(CLI::IsMember({"deform", "perceptual", "dual-branch"}));
}

RunConfig resolve(const CommonFlags& fl) {
  RunConfig cfg;
  if (!fl.config_path.empty()) cfg = load_run_config(fl.config_path);
  if (fl.seed_set) {
    cfg.scene_seed = fl.seed;
    cfg.seq_seed = fl.seed;
    cfg.train.seed = fl.seed;
  }
  if (fl.iters >= 0) cfg.train.iters = fl.iters;
  if (!fl.out_dir.empty()) cfg.out_dir = fl.out_dir;
  for (const std::string& a : fl.ablate) {
    if (a == "deform")
      cfg.train.deform_enabled = false;
    else if (a == "perceptual")
      cfg.train.perceptual_enabled = false;
    else if (a == "dual-branch")
      cfg.train.dual_branch = false;
  }
  cfg.validate();
  return cfg;
}

int cmd_make_scene(const CommonFlags& fl) {
  RunConfig cfg = resolve(fl);
  SyntheticScene scene =
      make_synthetic_scene(cfg.scene_seed, cfg.scene_frames, cfg.scene_size);
  export_scene(scene, cfg.out_dir);
  std::cout << "wrote " << scene.n_frames << " frames (" << scene.gt_size
            << "x" << scene.gt_size << " gt) to " << cfg.out_dir << "\n";
  return 0;
}

int cmd_train_nerf(const CommonFlags& fl) {
  RunConfig cfg = resolve(fl);
  SyntheticScene scene =
      make_synthetic_scene(cfg.scene_seed, cfg.scene_frames, cfg.scene_size);
  ParamStore store;
  Rng rng(cfg.train.seed);
  init_dbf_nerf(store, cfg.fields, cfg.pipeline, rng);
  std::vector<LossRow> rows =
      train_dbf_nerf(scene, store, cfg.fields, cfg.pipeline, cfg.train);
  fs::create_directories(cfg.out_dir);
  save_checkpoint(store, cfg.out_dir + "/nerf.ckpt");
  write_loss_csv(cfg.out_dir + "/loss.csv", rows);
  if (!rows.empty())
    std::cout << "final loss " << rows.back().total << " after "
              << cfg.train.iters << " iterations\n";
  std::cout << "wrote " << cfg.out_dir << "/nerf.ckpt and loss.csv\n";
  return 0;
}

int cmd_render(const CommonFlags& fl, const std::string& ckpt) {
  RunConfig cfg = resolve(fl);
  SyntheticScene scene =
      make_synthetic_scene(cfg.scene_seed, cfg.scene_frames, cfg.scene_size);
  ParamStore store;
  load_checkpoint(store, ckpt);
  fs::create_directories(cfg.out_dir);
  for (int f = 0; f < scene.n_frames; ++f) {
    Tape tape;
    Tensor img = render_scene_frame(tape, scene, f, store, cfg.fields,
                                    cfg.pipeline, cfg.train.deform_enabled,
                                    cfg.train.dual_branch);
    char name[32];
    std::snprintf(name, sizeof name, "/frame_%04d.ppm", f);
    write_ppm(cfg.out_dir + name, img.value(), scene.out_size, scene.out_size);
  }
  std::cout << "rendered " << scene.n_frames << " frames to " << cfg.out_dir
            << "\n";
  return 0;
}

int cmd_fit_codebook(const CommonFlags& fl) {
  RunConfig cfg = resolve(fl);
  auto [expr, pose] =
      make_synthetic_sequences(cfg.seq_seed, cfg.seq_frames, cfg.seq_emotion);
  ParamStore store;
  Rng rng(cfg.train.seed);
  init_vq(store, "exp_vq", SeqKind::Expression, cfg.vq, rng);
  init_vq(store, "pose_vq", SeqKind::DeltaPose, cfg.vq, rng);
  init_adf(store, cfg.vq, rng);

  TrainConfig tc = cfg.train;
  float last = 0.0f;
  for (int it = 0; it < cfg.train.iters; ++it) {
    Tape t;
    auto oe = vq_autoencode(t, expr, store, "exp_vq", cfg.vq);
    auto op = vq_autoencode(t, pose, store, "pose_vq", cfg.vq);
    Tensor ze = t.constant({expr.t, expr.dim}, expr.frames);
    Tensor zp = t.constant({pose.t, pose.dim}, pose.frames);
    Tensor loss = add(vq_loss(ze, oe.recon, oe.codes, oe.selected),
                      vq_loss(zp, op.recon, op.codes, op.selected));
    last = loss.scalar();
    store.zero_grads();
    t.backward(loss);
    adam_step(store, tc, tc.lr);
  }
  freeze_vq_stage(store);
  fs::create_directories(cfg.out_dir);
  save_checkpoint(store, cfg.out_dir + "/codebook.ckpt");
  std::cout << "final vq loss " << last << " after " << cfg.train.iters
            << " iterations; wrote " << cfg.out_dir << "/codebook.ckpt\n";
  return 0;
}

int cmd_gen_sequence(const CommonFlags& fl, const std::string& ckpt) {
  RunConfig cfg = resolve(fl);
  ParamStore store;
  load_checkpoint(store, ckpt);
  auto [style_exp, style_pose] =
      make_synthetic_sequences(cfg.seq_seed + 1, cfg.seq_frames, cfg.seq_emotion);
  AudioFeatureSeq audio = synth_audio_features(cfg.seq_seed, cfg.seq_frames);
  Tape t;
  AdfOutputs out = adf_generate(t, audio, style_exp, style_pose, store, cfg.vq);

  CoeffSequence expr;
  expr.kind = SeqKind::Expression;
  expr.t = audio.n;
  expr.dim = 53;
  expr.frames = out.exp.value();
  expr.emotion = style_exp.emotion;

  CoeffSequence pose;
  pose.kind = SeqKind::DeltaPose;
  pose.t = audio.n;
  pose.dim = 6;
  pose.frames = out.dpose.value();
  pose.first_pose = style_pose.first_pose;

  fs::create_directories(cfg.out_dir);
  save_sequence(cfg.out_dir + "/expression.seq", expr);
  save_sequence(cfg.out_dir + "/delta_pose.seq", pose);
  std::cout << "wrote " << audio.n << "-frame expression.seq and delta_pose.seq to "
            << cfg.out_dir << "\n";
  return 0;
}

int cmd_check_grad(const CommonFlags& fl) {
  uint64_t seed = fl.seed_set ? fl.seed : 7;
  std::vector<GradCheckEntry> rows = run_gradient_suite(seed);
  double worst = 0.0;
  for (const GradCheckEntry& r : rows) {
    std::printf("%-28s %.3e\n", r.name.c_str(), r.err);
    worst = std::max(worst, r.err);
  }
  std::printf("worst                        %.3e\n", worst);
  if (worst >= 1e-3) {
    std::cerr << "gradient check failed: worst error " << worst << "\n";
    return 2;
  }
  return 0;
}

int cmd_metrics(const std::string& dir_a, const std::string& dir_b) {
  std::set<std::string> names;
  for (auto& e : fs::directory_iterator(dir_a))
    if (e.path().extension() == ".ppm") names.insert(e.path().filename());
  if (names.empty())
    throw TensorError("metrics: no .ppm files in '" + dir_a + "'");
  double psnr_sum = 0.0, ssim_sum = 0.0;
  int n = 0;
  bool any_inf = false;
  for (const std::string& name : names) {
    std::string pb = dir_b + "/" + name;
    if (!fs::exists(pb))
      throw TensorError("metrics: '" + pb + "' is missing");
    int ha, wa, hb, wb;
    std::vector<float> a = read_ppm(dir_a + "/" + name, ha, wa);
    std::vector<float> b = read_ppm(pb, hb, wb);
    if (ha != hb || wa != wb)
      throw TensorError("metrics: size mismatch for '" + name + "'");
    ImageMetrics m = image_metrics(a, b, ha, wa);
    std::printf("%-24s psnr %8.3f  ssim %.5f\n", name.c_str(), m.psnr, m.ssim);
    if (std::isinf(m.psnr))
      any_inf = true;
    else
      psnr_sum += m.psnr;
    ssim_sum += m.ssim;
    ++n;
  }
  std::printf("mean over %d images      psnr %8.3f%s ssim %.5f\n", n,
              any_inf ? std::numeric_limits<float>::infinity()
                      : psnr_sum / n,
              any_inf ? " (some exact)" : "", ssim_sum / n);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("ERL_THREADS"))
    openblas_set_num_threads(std::max(1, std::atoi(threads)));

  CLI::App app{"dual-branch talking-head renderer toolkit"};
  app.require_subcommand(1);

  std::map<std::string, CommonFlags> flags;
  std::string render_ckpt, gen_ckpt, metrics_a, metrics_b;

  CLI::App* make_scene = app.add_subcommand("make-scene", "export a synthetic scene");
  add_common(make_scene, flags["make-scene"]);
  CLI::App* train = app.add_subcommand("train-nerf", "train the renderer on a synthetic scene");
  add_common(train, flags["train-nerf"]);
  CLI::App* render = app.add_subcommand("render", "render frames from a checkpoint");
  add_common(render, flags["render"]);
  render->add_option("--checkpoint", render_ckpt, "renderer checkpoint")->required();
  CLI::App* fit = app.add_subcommand("fit-codebook", "train the motion quantizer");
  add_common(fit, flags["fit-codebook"]);
  CLI::App* gen = app.add_subcommand("gen-sequence", "audio-driven coefficient generation");
  add_common(gen, flags["gen-sequence"]);
  gen->add_option("--checkpoint", gen_ckpt, "codebook checkpoint")->required();
  CLI::App* grad = app.add_subcommand("check-grad", "finite-difference audit of every op");
  add_common(grad, flags["check-grad"]);
  CLI::App* metrics = app.add_subcommand("metrics", "compare two image directories");
  metrics->add_option("dir_a", metrics_a, "reference directory")->required();
  metrics->add_option("dir_b", metrics_b, "candidate directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (make_scene->parsed()) return cmd_make_scene(flags["make-scene"]);
    if (train->parsed()) return cmd_train_nerf(flags["train-nerf"]);
    if (render->parsed()) return cmd_render(flags["render"], render_ckpt);
    if (fit->parsed()) return cmd_fit_codebook(flags["fit-codebook"]);
    if (gen->parsed()) return cmd_gen_sequence(flags["gen-sequence"], gen_ckpt);
    if (grad->parsed()) return cmd_check_grad(flags["check-grad"]);
    if (metrics->parsed()) return cmd_metrics(metrics_a, metrics_b);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
