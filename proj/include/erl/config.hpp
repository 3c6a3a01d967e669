#pragma once

#include <string>

#include "erl/codebook.hpp"
#include "erl/training.hpp"

namespace erl {

// Flat "key = value" run configuration; '#' starts a comment, unknown keys
// are rejected with the key name and line number.
struct RunConfig {
  uint64_t scene_seed = 1;
  int scene_frames = 8;
  int scene_size = 64;
  uint64_t seq_seed = 1;
  int seq_frames = 16;
  int seq_emotion = 0;
  FieldConfig fields;
  PipelineConfig pipeline;
  VqConfig vq;
  TrainConfig train;
  std::string out_dir = "out";

  void validate() const;
};

RunConfig parse_run_config(const std::string& text,
                           const std::string& source = "<config>");
RunConfig load_run_config(const std::string& path);

}  // namespace erl
