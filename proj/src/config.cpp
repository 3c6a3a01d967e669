#include "erl/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace erl {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct Ctx {
  std::string source;
  int line = 0;
  [[noreturn]] void fail(const std::string& msg) const {
    throw TensorError(source + ":" + std::to_string(line) + ": " + msg);
  }
};

template <typename T>
T parse_num(const Ctx& c, const std::string& key, const std::string& v) {
  std::istringstream ss(v);
  T out;
  ss >> out;
  std::string rest;
  if (!ss || (ss >> rest && !rest.empty()))
    c.fail("key '" + key + "': cannot parse '" + v + "'");
  return out;
}

bool parse_bool(const Ctx& c, const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  c.fail("key '" + key + "': expected a boolean, got '" + v + "'");
}

}  // namespace

void RunConfig::validate() const {
  if (scene_frames < 1 || scene_size < 8 || scene_size % 2 != 0)
    throw TensorError("RunConfig: scene needs >= 1 frames and an even size >= 8");
  if (seq_frames < 2 || seq_emotion < 0 || seq_emotion >= 5)
    throw TensorError("RunConfig: sequence needs >= 2 frames, emotion in [0,5)");
  if (fields.depth < 1 || fields.width < 1 || fields.feature_dim < 1)
    throw TensorError("RunConfig: field sizes must be positive");
  if (pipeline.n_samples < 2 || pipeline.t_far <= pipeline.t_near)
    throw TensorError("RunConfig: need n_samples >= 2 and t_far > t_near");
  if (pipeline.fusion_alpha <= 0.0f)
    throw TensorError("RunConfig: fusion alpha must be positive");
  if (pipeline.upsample_blocks < 0)
    throw TensorError("RunConfig: upsample blocks must be >= 0");
  if (vq.book_size < 1 || vq.code_dim < 1 || vq.tau < 1 || vq.hidden < 1 ||
      vq.style_dim < 1)
    throw TensorError("RunConfig: codebook sizes must be positive");
  if (out_dir.empty()) throw TensorError("RunConfig: out_dir must be set");
  train.validate();
}

RunConfig parse_run_config(const std::string& text, const std::string& source) {
  RunConfig cfg;
  Ctx ctx{source, 0};
  using Setter = std::function<void(const std::string&, const std::string&)>;
  std::map<std::string, Setter> keys;
  auto num = [&](auto* field) {
    return Setter([&ctx, field](const std::string& k, const std::string& v) {
      *field = parse_num<std::decay_t<decltype(*field)>>(ctx, k, v);
    });
  };
  auto boolean = [&](bool* field) {
    return Setter([&ctx, field](const std::string& k, const std::string& v) {
      *field = parse_bool(ctx, k, v);
    });
  };
  keys["scene.seed"] = num(&cfg.scene_seed);
  keys["scene.frames"] = num(&cfg.scene_frames);
  keys["scene.size"] = num(&cfg.scene_size);
  keys["sequence.seed"] = num(&cfg.seq_seed);
  keys["sequence.frames"] = num(&cfg.seq_frames);
  keys["sequence.emotion"] = num(&cfg.seq_emotion);
  keys["fields.depth"] = num(&cfg.fields.depth);
  keys["fields.width"] = num(&cfg.fields.width);
  keys["fields.pe_position"] = num(&cfg.fields.pe_position);
  keys["fields.pe_direction"] = num(&cfg.fields.pe_direction);
  keys["fields.feature_dim"] = num(&cfg.fields.feature_dim);
  keys["pipeline.n_samples"] = num(&cfg.pipeline.n_samples);
  keys["pipeline.t_near"] = num(&cfg.pipeline.t_near);
  keys["pipeline.t_far"] = num(&cfg.pipeline.t_far);
  keys["pipeline.fusion_alpha"] = num(&cfg.pipeline.fusion_alpha);
  keys["pipeline.upsample_blocks"] = num(&cfg.pipeline.upsample_blocks);
  keys["vq.book_size"] = num(&cfg.vq.book_size);
  keys["vq.code_dim"] = num(&cfg.vq.code_dim);
  keys["vq.tau"] = num(&cfg.vq.tau);
  keys["vq.hidden"] = num(&cfg.vq.hidden);
  keys["vq.style_dim"] = num(&cfg.vq.style_dim);
  keys["train.lr"] = num(&cfg.train.lr);
  keys["train.lr_adf"] = num(&cfg.train.lr_adf);
  keys["train.beta1"] = num(&cfg.train.beta1);
  keys["train.beta2"] = num(&cfg.train.beta2);
  keys["train.eps"] = num(&cfg.train.eps);
  keys["train.weight_decay"] = num(&cfg.train.weight_decay);
  keys["train.iters"] = num(&cfg.train.iters);
  keys["train.seed"] = num(&cfg.train.seed);
  keys["train.beta_h"] = num(&cfg.train.beta_h);
  keys["train.beta_s"] = num(&cfg.train.beta_s);
  keys["train.perceptual_weight"] = num(&cfg.train.perceptual_weight);
  keys["train.deform"] = boolean(&cfg.train.deform_enabled);
  keys["train.perceptual"] = boolean(&cfg.train.perceptual_enabled);
  keys["train.dual_branch"] = boolean(&cfg.train.dual_branch);
  keys["train.optimizer"] = Setter(
      [&ctx, &cfg](const std::string& k, const std::string& v) {
        if (v == "adam")
          cfg.train.optimizer = OptimizerKind::Adam;
        else if (v == "adamw")
          cfg.train.optimizer = OptimizerKind::AdamW;
        else
          ctx.fail("key '" + k + "': expected adam or adamw, got '" + v + "'");
      });
  keys["out_dir"] = Setter(
      [&cfg](const std::string&, const std::string& v) { cfg.out_dir = v; });

  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    ++ctx.line;
    std::string line = raw;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) ctx.fail("expected 'key = value', got '" + trim(raw) + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    auto it = keys.find(key);
    if (it == keys.end()) ctx.fail("unknown key '" + key + "'");
    if (value.empty()) ctx.fail("key '" + key + "': missing value");
    it->second(key, value);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw TensorError("load_run_config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str(), path);
}

}  // namespace erl
