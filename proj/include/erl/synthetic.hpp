#pragma once

#include <string>
#include <vector>

#include "erl/codebook.hpp"
#include "erl/fields.hpp"
#include "erl/geometry.hpp"

namespace erl {

struct SceneFrame {
  MotionFrame motion;
  std::vector<float> gt;           // gt_size*gt_size*3 in [0,1]
  std::vector<float> mask_head;    // map_size*map_size, binary
  std::vector<float> mask_static;  // map_size*map_size, binary
};

// Stand-in footage: a Gaussian head blob whose center tracks the pose and
// whose hue tracks expression[0], over a static torso rectangle and a fixed
// background.
struct SyntheticScene {
  int n_frames = 0;
  int gt_size = 0;   // ground-truth comparison resolution
  int map_size = 0;  // ray grid / feature map resolution
  int out_size = 0;  // composed output resolution (map_size * 2^blocks)
  std::vector<SceneFrame> frames;
  std::vector<float> background;  // out_size*out_size*3
  Intrinsics intrinsics;
};

SyntheticScene make_synthetic_scene(uint64_t seed, int n_frames, int size);

// Band-limited coefficient tracks (<= 3 sinusoids per dim).
std::pair<CoeffSequence, CoeffSequence> make_synthetic_sequences(
    uint64_t seed, int t, int emotion);

struct ImageMetrics {
  float psnr = 0.0f;  // +inf when images match exactly
  float ssim = 0.0f;
};
// Images are [h*w*3] floats in [0,1]. PSNR = 10*log10(1/MSE); SSIM uses an
// 11x11 Gaussian window (sigma 1.5), C1=0.01^2, C2=0.03^2, channel-averaged
// over fully valid windows.
ImageMetrics image_metrics(const std::vector<float>& a,
                           const std::vector<float>& b, int h, int w);

// Binary PPM (P6) with values scaled to 0..255.
void write_ppm(const std::string& path, const std::vector<float>& rgb, int h,
               int w);
std::vector<float> read_ppm(const std::string& path, int& h, int& w);

// Directory of frame_XXXX.ppm / mask images plus a text manifest.
void export_scene(const SyntheticScene& scene, const std::string& dir);

}  // namespace erl
