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

#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "streamg2p/config.hpp"
#include "streamg2p/model.hpp"

namespace streamg2p {

// Checkpoint container (little-endian binary):
//   magic "SG2PCKP1" | u32 version | u64 grapheme fp | u64 label fp |
//   u64 config length | config text (RunConfig key=value) |
//   u32 param count | per param: u32 name len | name | u8 elem size (4|8) |
//   u32 ndim | u64 dims... | raw element data
// Values convert between f32 and f64 on load, so a model trained in f64 can
// be served in the f32 inference default.

namespace ckpt_detail {

constexpr char kMagic[9] = "SG2PCKP1";

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw InputError("checkpoint: unexpected end of file");
  return v;
}

}  // namespace ckpt_detail

template <typename S>
void save_checkpoint(const std::string& path, const ModelParams<S>& model,
                     const RunConfig& cfg) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open checkpoint for writing: " + path);
  using namespace ckpt_detail;
  os.write(kMagic, 8);
  write_pod<uint32_t>(os, 1);
  write_pod<uint64_t>(os, GraphemeVocab::instance().fingerprint());
  write_pod<uint64_t>(os, LabelVocab::instance().fingerprint());
  std::string cfg_text = cfg.serialize();
  write_pod<uint64_t>(os, cfg_text.size());
  os.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
  auto params = model.all_params();
  write_pod<uint32_t>(os, static_cast<uint32_t>(params.size()));
  for (const Param<S>* p : params) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_pod<uint8_t>(os, sizeof(S));
    write_pod<uint32_t>(os, static_cast<uint32_t>(p->value.shape.size()));
    for (int64_t dim : p->value.shape) write_pod<uint64_t>(os, static_cast<uint64_t>(dim));
    os.write(reinterpret_cast<const char*>(p->value.data.data()),
             static_cast<std::streamsize>(p->value.data.size() * sizeof(S)));
  }
  if (!os) throw InputError("checkpoint write failed: " + path);
}

template <typename S>
ModelParams<S> load_checkpoint(const std::string& path, RunConfig* cfg_out = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint: " + path);
  using namespace ckpt_detail;
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw InputError("not a streamg2p checkpoint: " + path);
  uint32_t version = read_pod<uint32_t>(is);
  if (version != 1) throw InputError("unsupported checkpoint version");
  uint64_t gfp = read_pod<uint64_t>(is);
  uint64_t lfp = read_pod<uint64_t>(is);
  if (gfp != GraphemeVocab::instance().fingerprint() ||
      lfp != LabelVocab::instance().fingerprint())
    throw InputError("checkpoint vocabulary fingerprint mismatch");
  uint64_t cfg_len = read_pod<uint64_t>(is);
  std::string cfg_text(cfg_len, '\0');
  is.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
  RunConfig cfg = parse_config_text(cfg_text);
  if (cfg_out != nullptr) *cfg_out = cfg;

  ModelParams<S> model;
  model.cfg = cfg.model;
  model.init(Rng(cfg.seed));  // shapes + names; values overwritten below

  std::map<std::string, Param<S>*> by_name;
  for (Param<S>* p : model.all_params()) by_name[p->name] = p;

  uint32_t count = read_pod<uint32_t>(is);
  if (count != by_name.size())
    throw InputError("checkpoint parameter count mismatch: file has " + std::to_string(count));
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = read_pod<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    uint8_t elem = read_pod<uint8_t>(is);
    uint32_t ndim = read_pod<uint32_t>(is);
    std::vector<int64_t> shape;
    for (uint32_t d = 0; d < ndim; ++d)
      shape.push_back(static_cast<int64_t>(read_pod<uint64_t>(is)));
    auto it = by_name.find(name);
    if (it == by_name.end()) throw InputError("checkpoint has unknown parameter: " + name);
    Param<S>& p = *it->second;
    if (p.value.shape != shape)
      throw InputError("checkpoint shape mismatch for " + name + ": file " +
                       Tensor<S>(shape).shape_str() + " model " + p.value.shape_str());
    int64_t n = p.value.numel();
    if (elem == sizeof(S)) {
      is.read(reinterpret_cast<char*>(p.value.data.data()),
              static_cast<std::streamsize>(n * sizeof(S)));
    } else if (elem == 4) {
      std::vector<float> buf(static_cast<size_t>(n));
      is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 4));
      for (int64_t j = 0; j < n; ++j) p.value.data[static_cast<size_t>(j)] = static_cast<S>(buf[static_cast<size_t>(j)]);
    } else if (elem == 8) {
      std::vector<double> buf(static_cast<size_t>(n));
      is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 8));
      for (int64_t j = 0; j < n; ++j) p.value.data[static_cast<size_t>(j)] = static_cast<S>(buf[static_cast<size_t>(j)]);
    } else {
      throw InputError("checkpoint has unsupported element size");
    }
    if (!is) throw InputError("checkpoint: unexpected end of file in " + name);
  }
  return model;
}

}  // namespace streamg2p
