#include "erl/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace erl {

namespace {

// Blob center in output-resolution pixels, injective in the pose angles.
void blob_center(const PoseCoeffs& pose, int out_size, float& cx, float& cy) {
  float s = out_size / 64.0f;
  cx = out_size * 0.5f + 40.0f * s * pose.rotation[1];
  cy = out_size * 0.5f + 40.0f * s * pose.rotation[0];
}

}  // namespace

SyntheticScene make_synthetic_scene(uint64_t seed, int n_frames, int size) {
  if (n_frames < 1) throw TensorError("make_synthetic_scene: frames >= 1");
  if (size < 8 || size % 2 != 0)
    throw TensorError("make_synthetic_scene: size must be even and >= 8");
  SyntheticScene scene;
  scene.n_frames = n_frames;
  scene.gt_size = size;
  scene.map_size = size;
  scene.out_size = size * 2;
  scene.intrinsics =
      Intrinsics{float(size), size / 2.0f, size / 2.0f, size, size};

  Rng rng(seed);
  // smooth background gradient with a seeded tint
  float tint[3] = {rng.uniform(0.1f, 0.35f), rng.uniform(0.1f, 0.35f),
                   rng.uniform(0.1f, 0.35f)};
  int os = scene.out_size;
  scene.background.resize(static_cast<size_t>(os) * os * 3);
  for (int i = 0; i < os; ++i)
    for (int j = 0; j < os; ++j)
      for (int c = 0; c < 3; ++c)
        scene.background[(static_cast<size_t>(i) * os + j) * 3 + c] =
            tint[c] + 0.25f * float(i) / os + 0.1f * float(j) / os;

  auto [expr_seq, pose_seq] = make_synthetic_sequences(seed + 1, n_frames, 0);
  std::vector<float> poses = delta_decode(
      pose_seq.first_pose,
      std::vector<float>(pose_seq.frames.begin(), pose_seq.frames.end()));

  float sigma = os / 8.0f;                 // blob radius scale
  float thresh = 0.32f;                    // mask cut at ~1.5 sigma
  int torso_top = os * 2 / 3, torso_l = os / 4, torso_r = os * 3 / 4;
  float torso_col[3] = {0.55f, 0.35f, 0.25f};

  scene.frames.resize(n_frames);
  int ms = scene.map_size;
  for (int f = 0; f < n_frames; ++f) {
    SceneFrame& fr = scene.frames[f];
    fr.motion.expression.assign(expr_seq.frames.begin() + f * 53,
                                expr_seq.frames.begin() + (f + 1) * 53);
    fr.motion.emotion = {1, 0, 0, 0, 0};
    // frame 0 keeps the zero pose so the blob starts centered
    if (f > 0) {
      fr.motion.pose.rotation = {poses[f * 6], poses[f * 6 + 1],
                                 poses[f * 6 + 2]};
      fr.motion.pose.translation = {poses[f * 6 + 3], poses[f * 6 + 4],
                                    poses[f * 6 + 5]};
    }
    fr.motion.jaw = {0.1f * fr.motion.expression[1], 0, 0};

    float cx, cy;
    blob_center(fr.motion.pose, os, cx, cy);
    float hue = 0.5f + 0.5f * std::tanh(2.0f * fr.motion.expression[0]);
    float head_col[3] = {0.3f + 0.6f * hue, 0.5f, 0.8f - 0.5f * hue};

    // paint at output resolution, then average-pool to gt resolution
    std::vector<float> hi(static_cast<size_t>(os) * os * 3);
    for (int i = 0; i < os; ++i)
      for (int j = 0; j < os; ++j) {
        size_t p = (static_cast<size_t>(i) * os + j) * 3;
        float px[3] = {scene.background[p], scene.background[p + 1],
                       scene.background[p + 2]};
        if (i >= torso_top && j >= torso_l && j < torso_r)
          for (int c = 0; c < 3; ++c) px[c] = torso_col[c];
        float dx = j + 0.5f - cx, dy = i + 0.5f - cy;
        float g = std::exp(-(dx * dx + dy * dy) / (2.0f * sigma * sigma));
        if (g > thresh)
          for (int c = 0; c < 3; ++c) px[c] = head_col[c];
        for (int c = 0; c < 3; ++c)
          hi[p + c] = std::min(std::max(px[c], 0.0f), 1.0f);
      }
    int gs = scene.gt_size;
    fr.gt.resize(static_cast<size_t>(gs) * gs * 3);
    for (int i = 0; i < gs; ++i)
      for (int j = 0; j < gs; ++j)
        for (int c = 0; c < 3; ++c) {
          float acc = 0.0f;
          for (int di = 0; di < 2; ++di)
            for (int dj = 0; dj < 2; ++dj)
              acc += hi[(static_cast<size_t>(2 * i + di) * os + 2 * j + dj) *
                            3 +
                        c];
          fr.gt[(static_cast<size_t>(i) * gs + j) * 3 + c] = acc / 4.0f;
        }

    fr.mask_head.assign(static_cast<size_t>(ms) * ms, 0.0f);
    fr.mask_static.assign(static_cast<size_t>(ms) * ms, 0.0f);
    float scale = float(os) / ms;
    for (int i = 0; i < ms; ++i)
      for (int j = 0; j < ms; ++j) {
        float y = (i + 0.5f) * scale, x = (j + 0.5f) * scale;
        float dx = x - cx, dy = y - cy;
        float g = std::exp(-(dx * dx + dy * dy) / (2.0f * sigma * sigma));
        // dilate the head mask slightly so fusion keeps blob edges
        if (g > thresh * 0.5f)
          fr.mask_head[static_cast<size_t>(i) * ms + j] = 1.0f;
        if (y >= torso_top && x >= torso_l && x < torso_r)
          fr.mask_static[static_cast<size_t>(i) * ms + j] = 1.0f;
      }
  }
  return scene;
}

std::pair<CoeffSequence, CoeffSequence> make_synthetic_sequences(
    uint64_t seed, int t, int emotion) {
  if (t < 2) throw TensorError("make_synthetic_sequences: t >= 2");
  if (emotion < 0 || emotion >= 5)
    throw TensorError("make_synthetic_sequences: emotion in [0,5)");
  Rng rng(seed);
  CoeffSequence expr;
  expr.kind = SeqKind::Expression;
  expr.t = t;
  expr.dim = 53;
  expr.emotion = {};
  expr.emotion[emotion] = 1.0f;
  expr.frames.resize(static_cast<size_t>(t) * 53);
  for (int d = 0; d < 53; ++d) {
    float amp[3], freq[3], phase[3];
    for (int k = 0; k < 3; ++k) {
      amp[k] = rng.uniform(0.0f, 0.3f);
      freq[k] = rng.uniform(0.02f, 0.2f);
      phase[k] = rng.uniform(0.0f, 6.2831853f);
    }
    for (int i = 0; i < t; ++i) {
      float v = 0.0f;
      for (int k = 0; k < 3; ++k) v += amp[k] * std::sin(freq[k] * i + phase[k]);
      expr.frames[static_cast<size_t>(i) * 53 + d] = v;
    }
  }

  // absolute pose track, emitted as deltas from the first frame
  const float max_step = 0.05f;
  std::vector<float> poses(static_cast<size_t>(t) * 6);
  for (int d = 0; d < 6; ++d) {
    float amp[3], freq[3], phase[3];
    for (int k = 0; k < 3; ++k) {
      amp[k] = rng.uniform(0.0f, d < 3 ? 0.25f : 0.1f);
      freq[k] = rng.uniform(0.02f, 0.15f);
      phase[k] = rng.uniform(0.0f, 6.2831853f);
    }
    for (int i = 0; i < t; ++i) {
      float v = 0.0f;
      for (int k = 0; k < 3; ++k) v += amp[k] * std::sin(freq[k] * i + phase[k]);
      poses[static_cast<size_t>(i) * 6 + d] = v;
    }
  }
  // clamp per-frame steps to the configured bound
  for (int i = 1; i < t; ++i)
    for (int d = 0; d < 6; ++d) {
      float prev = poses[static_cast<size_t>(i - 1) * 6 + d];
      float& cur = poses[static_cast<size_t>(i) * 6 + d];
      cur = std::min(std::max(cur, prev - max_step), prev + max_step);
    }
  auto [first, deltas] = delta_encode(poses);
  CoeffSequence pose;
  pose.kind = SeqKind::DeltaPose;
  pose.t = t - 1;
  pose.dim = 6;
  pose.first_pose = first;
  pose.frames = std::move(deltas);
  return {std::move(expr), std::move(pose)};
}

namespace {

std::vector<float> gaussian11() {
  std::vector<float> k(11);
  float sum = 0.0f;
  for (int i = 0; i < 11; ++i) {
    float x = i - 5.0f;
    k[i] = std::exp(-x * x / (2.0f * 1.5f * 1.5f));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

}  // namespace

ImageMetrics image_metrics(const std::vector<float>& a,
                           const std::vector<float>& b, int h, int w) {
  if (a.size() != b.size() ||
      a.size() != static_cast<size_t>(h) * w * 3)
    throw TensorError("image_metrics: size mismatch");
  ImageMetrics m;
  double mse = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = static_cast<double>(a[i]) - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  m.psnr = mse == 0.0 ? std::numeric_limits<float>::infinity()
                      : static_cast<float>(10.0 * std::log10(1.0 / mse));

  if (h < 11 || w < 11)
    throw TensorError("image_metrics: images must be at least 11x11");
  std::vector<float> k = gaussian11();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double ssim_acc = 0.0;
  int64_t count = 0;
  int oh = h - 10, ow = w - 10;
  // separable Gaussian filtering of the five moment images, valid windows
  auto filt = [&](const std::vector<double>& img) {
    std::vector<double> tmp(static_cast<size_t>(h) * ow);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (int u = 0; u < 11; ++u) acc += k[u] * img[static_cast<size_t>(i) * w + j + u];
        tmp[static_cast<size_t>(i) * ow + j] = acc;
      }
    std::vector<double> out(static_cast<size_t>(oh) * ow);
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (int u = 0; u < 11; ++u) acc += k[u] * tmp[static_cast<size_t>(i + u) * ow + j];
        out[static_cast<size_t>(i) * ow + j] = acc;
      }
    return out;
  };
  for (int c = 0; c < 3; ++c) {
    std::vector<double> ia(static_cast<size_t>(h) * w), ib(ia.size()),
        iaa(ia.size()), ibb(ia.size()), iab(ia.size());
    for (int p = 0; p < h * w; ++p) {
      double x = a[static_cast<size_t>(p) * 3 + c];
      double y = b[static_cast<size_t>(p) * 3 + c];
      ia[p] = x;
      ib[p] = y;
      iaa[p] = x * x;
      ibb[p] = y * y;
      iab[p] = x * y;
    }
    auto mu_a = filt(ia), mu_b = filt(ib), saa = filt(iaa), sbb = filt(ibb),
         sab = filt(iab);
    for (size_t p = 0; p < mu_a.size(); ++p) {
      double va = saa[p] - mu_a[p] * mu_a[p];
      double vb = sbb[p] - mu_b[p] * mu_b[p];
      double cov = sab[p] - mu_a[p] * mu_b[p];
      double num = (2.0 * mu_a[p] * mu_b[p] + c1) * (2.0 * cov + c2);
      double den = (mu_a[p] * mu_a[p] + mu_b[p] * mu_b[p] + c1) * (va + vb + c2);
      ssim_acc += num / den;
      ++count;
    }
  }
  m.ssim = static_cast<float>(ssim_acc / count);
  return m;
}

void export_scene(const SyntheticScene& scene, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream man(dir + "/manifest.txt");
  if (!man) throw TensorError("export_scene: cannot write manifest in " + dir);
  man << "frames " << scene.n_frames << "\n";
  man << "gt_size " << scene.gt_size << "\n";
  man << "map_size " << scene.map_size << "\n";
  man << "out_size " << scene.out_size << "\n";
  write_ppm(dir + "/background.ppm", scene.background, scene.out_size,
            scene.out_size);
  man.precision(9);
  for (int f = 0; f < scene.n_frames; ++f) {
    const SceneFrame& fr = scene.frames[f];
    char name[64];
    std::snprintf(name, sizeof name, "/frame_%04d.ppm", f);
    write_ppm(dir + name, fr.gt, scene.gt_size, scene.gt_size);
    int ms = scene.map_size;
    std::vector<float> mask_rgb(static_cast<size_t>(ms) * ms * 3);
    for (int p = 0; p < ms * ms; ++p) {
      mask_rgb[static_cast<size_t>(p) * 3] = fr.mask_head[p];
      mask_rgb[static_cast<size_t>(p) * 3 + 1] = fr.mask_static[p];
      mask_rgb[static_cast<size_t>(p) * 3 + 2] = 0.0f;
    }
    std::snprintf(name, sizeof name, "/mask_%04d.ppm", f);
    write_ppm(dir + name, mask_rgb, ms, ms);
    man << "pose " << f;
    for (float v : fr.motion.pose.rotation) man << " " << v;
    for (float v : fr.motion.pose.translation) man << " " << v;
    man << "\n";
    man << "expression0 " << f << " " << fr.motion.expression[0] << "\n";
  }
}

}  // namespace erl
