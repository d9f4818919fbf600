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

#include "streamg2p/config.hpp"

#include <fstream>
#include <sstream>

namespace streamg2p {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": '" + v + "'");
  }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("bad unsigned integer for " + key + ": '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": '" + v + "'");
  }
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  if (trim(v).empty() || trim(v) == "none") return out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(to_int(key, trim(item)));
  return out;
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
  if (key == "chunk_tokens") model.chunk_tokens = to_int(key, value);
  else if (key == "past_tokens") model.past_tokens = to_int(key, value);
  else if (key == "mla_tokens") model.mla_tokens = to_int(key, value);
  else if (key == "upsample") model.upsample = to_int(key, value);
  else if (key == "layers") model.layers = to_int(key, value);
  else if (key == "intermediate_layers") model.intermediate_layers = to_int_list(key, value);
  else if (key == "intermediate_weight") model.intermediate_weight = to_double(key, value);
  else if (key == "d_model") model.d_model = to_int(key, value);
  else if (key == "n_heads") model.n_heads = to_int(key, value);
  else if (key == "conv_kernel") model.conv_kernel = to_int(key, value);
  else if (key == "ff_dim") model.ff_dim = to_int(key, value);
  else if (key == "dropout") model.dropout = to_double(key, value);
  else if (key == "past_anchor") {
    if (value == "chunk_start") model.past_anchor = StreamingConfig::PastAnchor::kChunkStart;
    else if (value == "token") model.past_anchor = StreamingConfig::PastAnchor::kToken;
    else throw ConfigError("past_anchor must be chunk_start or token, got '" + value + "'");
  } else if (key == "mask_mode") {
    if (value == "full") model.full_context = true;
    else if (value == "streaming") model.full_context = false;
    else throw ConfigError("mask_mode must be streaming or full, got '" + value + "'");
  } else if (key == "seed") seed = to_u64(key, value);
  else if (key == "steps") steps = to_int(key, value);
  else if (key == "lr_start") lr_start = to_double(key, value);
  else if (key == "lr_end") lr_end = to_double(key, value);
  else if (key == "warmup_steps") warmup_steps = to_int(key, value);
  else if (key == "batch_frames") batch_frames = to_int(key, value);
  else if (key == "infeasible_clamp") infeasible_clamp = to_double(key, value);
  else if (key == "precision") {
    if (value != "f32" && value != "f64")
      throw ConfigError("precision must be f32 or f64, got '" + value + "'");
    precision = value;
  } else if (key == "val_interval") val_interval = to_int(key, value);
  else if (key == "log_interval") log_interval = to_int(key, value);
  else if (key == "val_subset") val_subset = to_int(key, value);
  else if (key == "train_data") train_data = value;
  else if (key == "valid_data") valid_data = value;
  else if (key == "out_dir") out_dir = value;
  else throw ConfigError("unknown config key: '" + key + "'");
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  os << "# streamg2p run configuration\n";
  os << "chunk_tokens = " << model.chunk_tokens << "\n";
  os << "past_tokens = " << model.past_tokens << "\n";
  os << "mla_tokens = " << model.mla_tokens << "\n";
  os << "upsample = " << model.upsample << "\n";
  os << "layers = " << model.layers << "\n";
  os << "intermediate_layers = ";
  for (size_t i = 0; i < model.intermediate_layers.size(); ++i)
    os << (i ? "," : "") << model.intermediate_layers[i];
  if (model.intermediate_layers.empty()) os << "none";
  os << "\n";
  os << "intermediate_weight = " << model.intermediate_weight << "\n";
  os << "d_model = " << model.d_model << "\n";
  os << "n_heads = " << model.n_heads << "\n";
  os << "conv_kernel = " << model.conv_kernel << "\n";
  os << "ff_dim = " << model.ff_dim << "\n";
  os << "dropout = " << model.dropout << "\n";
  os << "past_anchor = "
     << (model.past_anchor == StreamingConfig::PastAnchor::kChunkStart ? "chunk_start" : "token")
     << "\n";
  os << "mask_mode = " << (model.full_context ? "full" : "streaming") << "\n";
  os << "seed = " << seed << "\n";
  os << "steps = " << steps << "\n";
  os << "lr_start = " << lr_start << "\n";
  os << "lr_end = " << lr_end << "\n";
  os << "warmup_steps = " << warmup_steps << "\n";
  os << "batch_frames = " << batch_frames << "\n";
  os << "infeasible_clamp = " << infeasible_clamp << "\n";
  os << "precision = " << precision << "\n";
  os << "val_interval = " << val_interval << "\n";
  os << "log_interval = " << log_interval << "\n";
  os << "val_subset = " << val_subset << "\n";
  if (!train_data.empty()) os << "train_data = " << train_data << "\n";
  if (!valid_data.empty()) os << "valid_data = " << valid_data << "\n";
  os << "out_dir = " << out_dir << "\n";
  return os.str();
}

void RunConfig::validate() const {
  model.validate();
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (lr_start <= 0 || lr_end <= 0) throw ConfigError("learning rates must be positive");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
  if (batch_frames < model.upsample) throw ConfigError("batch_frames too small for one token");
  if (infeasible_clamp <= 0) throw ConfigError("infeasible_clamp must be positive");
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " is not key = value: '" +
                        line + "'");
    cfg.apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace streamg2p
