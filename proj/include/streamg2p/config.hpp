// Copyright (c) 2026 The streamg2p Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string>

#include "streamg2p/masking.hpp"

namespace streamg2p {

// Everything needed to reproduce a run: the streaming/architecture config
// plus training hyperparameters and data paths. Serializes to a flat
// key = value text file ('#' comments); unknown keys are rejected.
struct RunConfig {
  StreamingConfig model;

  uint64_t seed = 1;
  int steps = 30000;
  double lr_start = 1e-3;
  double lr_end = 1e-4;
  int warmup_steps = 1000;
  int batch_frames = 4096;       // dynamic batching cap (frames per step)
  double infeasible_clamp = 1e4; // loss assigned to unalignable targets
  std::string precision = "f64"; // f64 for training; inference defaults to f32
  int val_interval = 1000;
  int log_interval = 100;
  int val_subset = 300;          // sentences scored at val_interval checkpoints

  std::string train_data;
  std::string valid_data;
  std::string out_dir = "out";

  // Applies one key=value override; throws ConfigError on unknown keys or
  // unparsable values.
  void apply(const std::string& key, const std::string& value);

  std::string serialize() const;
  void validate() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);

}  // namespace streamg2p
