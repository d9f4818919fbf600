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

#include "streamg2p/masking.hpp"

#include <algorithm>
#include <sstream>

namespace streamg2p {

void StreamingConfig::validate() const {
  if (chunk_tokens < 1) throw ConfigError("chunk_tokens must be >= 1");
  if (past_tokens < 0) throw ConfigError("past_tokens must be >= 0");
  if (mla_tokens < 0) throw ConfigError("mla_tokens must be >= 0");
  if (upsample < 1) throw ConfigError("upsample must be >= 1");
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (d_model < 1 || n_heads < 1 || ff_dim < 1 || conv_kernel < 1)
    throw ConfigError("model dimensions must be >= 1");
  if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  for (int l : intermediate_layers)
    if (l < 1 || l >= layers)
      throw ConfigError("intermediate_layers must lie in {1..L-1}, got " + std::to_string(l));
}

bool token_may_attend(int64_t q, int64_t j, int64_t n_tokens, const StreamingConfig& cfg,
                      int layer_index) {
  if (layer_index < 1 || layer_index > cfg.layers)
    throw ConfigError("layer_index out of range: " + std::to_string(layer_index));
  if (q < 0 || q >= n_tokens || j < 0 || j >= n_tokens) return false;
  if (cfg.full_context) return true;

  const int64_t c = cfg.chunk_tokens;
  const int64_t chunk_start = (q / c) * c;
  const int64_t chunk_end = std::min(chunk_start + c, n_tokens);  // exclusive

  // (a) within the same chunk
  if (j >= chunk_start && j < chunk_end) return true;

  // (b) past context window
  const int64_t past_from = (cfg.past_anchor == StreamingConfig::PastAnchor::kChunkStart
                                 ? chunk_start
                                 : q) -
                            cfg.past_tokens;
  if (j >= past_from && j < chunk_start) return true;

  // (c) minimum look-ahead, first layer only
  if (layer_index == 1 && cfg.mla_tokens > 0 && j >= chunk_end &&
      j < chunk_end + cfg.mla_tokens)
    return true;

  return false;
}

LayerMask build_token_mask(int64_t n_tokens, const StreamingConfig& cfg, int layer_index) {
  if (n_tokens < 1) throw ConfigError("build_token_mask: n_tokens must be >= 1");
  LayerMask m;
  m.layer_index = layer_index;
  m.n = n_tokens;
  m.allowed.assign(static_cast<size_t>(n_tokens * n_tokens), 0);
  for (int64_t q = 0; q < n_tokens; ++q)
    for (int64_t j = 0; j < n_tokens; ++j)
      if (token_may_attend(q, j, n_tokens, cfg, layer_index)) m.set(q, j, true);
  return m;
}

LayerMask expand_to_frames(const LayerMask& token_mask, int upsample) {
  if (upsample < 1) throw ConfigError("expand_to_frames: upsample must be >= 1");
  if (upsample == 1) return token_mask;
  LayerMask m;
  m.layer_index = token_mask.layer_index;
  m.n = token_mask.n * upsample;
  m.allowed.assign(static_cast<size_t>(m.n * m.n), 0);
  for (int64_t q = 0; q < m.n; ++q)
    for (int64_t j = 0; j < m.n; ++j)
      if (token_mask.at(q / upsample, j / upsample)) m.set(q, j, true);
  return m;
}

std::vector<LayerMask> build_frame_masks(int64_t n_tokens, const StreamingConfig& cfg) {
  std::vector<LayerMask> out;
  out.reserve(cfg.layers);
  // Layers >= 2 share one topology; build it once and stamp the index.
  LayerMask first = expand_to_frames(build_token_mask(n_tokens, cfg, 1), cfg.upsample);
  out.push_back(std::move(first));
  if (cfg.layers > 1) {
    LayerMask rest = expand_to_frames(build_token_mask(n_tokens, cfg, 2), cfg.upsample);
    for (int l = 2; l <= cfg.layers; ++l) {
      LayerMask copy = rest;
      copy.layer_index = l;
      out.push_back(std::move(copy));
    }
  }
  return out;
}

WindowMask build_window_mask(const StreamingConfig& cfg, int layer_index, int64_t chunk_index,
                             int chunk_count, int past_count, int mla_count) {
  const int u = cfg.upsample;
  const int64_t chunk_start = chunk_index * cfg.chunk_tokens;
  const int64_t win_first = chunk_start - past_count;
  const int64_t win_tokens = past_count + chunk_count + mla_count;
  // Evaluate the global predicate over a sequence that extends at least to
  // the window's end; only relative structure matters.
  const int64_t n_hint = chunk_start + chunk_count + mla_count;
  WindowMask w;
  w.rows = static_cast<int64_t>(chunk_count) * u;
  w.cols = win_tokens * u;
  w.allowed.assign(static_cast<size_t>(w.rows * w.cols), 0);
  for (int64_t qi = 0; qi < chunk_count; ++qi)
    for (int64_t ji = 0; ji < win_tokens; ++ji) {
      bool ok = token_may_attend(chunk_start + qi, win_first + ji, n_hint, cfg, layer_index);
      if (!ok) continue;
      for (int a = 0; a < u; ++a)
        for (int b = 0; b < u; ++b)
          w.allowed[(qi * u + a) * w.cols + ji * u + b] = 1;
    }
  return w;
}

namespace {

// Boolean matrix product: out[q][j] = OR_x a[q][x] && b[x][j].
std::vector<uint8_t> bool_compose(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b,
                                  int64_t n) {
  std::vector<uint8_t> out(static_cast<size_t>(n * n), 0);
  for (int64_t q = 0; q < n; ++q)
    for (int64_t x = 0; x < n; ++x)
      if (a[q * n + x])
        for (int64_t j = 0; j < n; ++j)
          if (b[x * n + j]) out[q * n + j] = 1;
  return out;
}

std::vector<int> future_reach(const std::vector<uint8_t>& reach, int64_t n) {
  std::vector<int> out(static_cast<size_t>(n), 0);
  for (int64_t q = 0; q < n; ++q) {
    int64_t best = q;
    for (int64_t j = q; j < n; ++j)
      if (reach[q * n + j]) best = j;
    out[static_cast<size_t>(q)] = static_cast<int>(best - q);
  }
  return out;
}

std::vector<int> past_reach_of(const std::vector<uint8_t>& reach, int64_t n) {
  std::vector<int> out(static_cast<size_t>(n), 0);
  for (int64_t q = 0; q < n; ++q) {
    int64_t best = q;
    for (int64_t j = q; j >= 0; --j)
      if (reach[q * n + j]) best = j;
    out[static_cast<size_t>(q)] = static_cast<int>(q - best);
  }
  return out;
}

LayerMask regular_mask(int64_t n, int w) {
  LayerMask m;
  m.n = n;
  m.allowed.assign(static_cast<size_t>(n * n), 0);
  for (int64_t q = 0; q < n; ++q)
    for (int64_t j = 0; j < n; ++j)
      if (j <= q + w) m.set(q, j, true);
  return m;
}

}  // namespace

ReceptiveFieldReport effective_lookahead(const StreamingConfig& cfg, int64_t n_tokens,
                                         LookaheadMode mode, int regular_lookahead) {
  if (n_tokens < cfg.chunk_tokens)
    throw ConfigError("effective_lookahead: n_tokens must be >= chunk size");
  ReceptiveFieldReport rep;
  rep.mode = mode;
  rep.n_tokens = n_tokens;
  rep.layers = cfg.layers;

  std::vector<std::vector<uint8_t>> masks;
  for (int l = 1; l <= cfg.layers; ++l) {
    if (mode == LookaheadMode::kChunkAware)
      masks.push_back(build_token_mask(n_tokens, cfg, l).allowed);
    else
      masks.push_back(regular_mask(n_tokens, regular_lookahead).allowed);
  }

  // reach after layer l: M_l o M_{l-1} o ... o M_1
  std::vector<uint8_t> reach = masks[0];
  std::vector<int> first_future = future_reach(reach, n_tokens);
  rep.constant_future.assign(static_cast<size_t>(cfg.layers), 1);
  rep.max_past_by_depth.clear();
  {
    auto p = past_reach_of(reach, n_tokens);
    rep.max_past_by_depth.push_back(*std::max_element(p.begin(), p.end()));
  }
  for (int l = 2; l <= cfg.layers; ++l) {
    reach = bool_compose(masks[static_cast<size_t>(l - 1)], reach, n_tokens);
    auto f = future_reach(reach, n_tokens);
    rep.constant_future[static_cast<size_t>(l - 1)] = (f == first_future) ? 1 : 0;
    auto p = past_reach_of(reach, n_tokens);
    rep.max_past_by_depth.push_back(*std::max_element(p.begin(), p.end()));
  }
  rep.lookahead = future_reach(reach, n_tokens);
  rep.past_reach = past_reach_of(reach, n_tokens);
  return rep;
}

std::string render_mask(const LayerMask& mask) {
  std::ostringstream os;
  for (int64_t q = 0; q < mask.n; ++q) {
    for (int64_t j = 0; j < mask.n; ++j) os << (mask.at(q, j) ? '#' : '.');
    os << '\n';
  }
  return os.str();
}

std::string receptive_field_table(const ReceptiveFieldReport& rep, const StreamingConfig& cfg) {
  std::ostringstream os;
  os << "token\tchunk\toffset\tlookahead\tpast_reach\tconstant_future\n";
  bool all_const = std::all_of(rep.constant_future.begin(), rep.constant_future.end(),
                               [](uint8_t v) { return v != 0; });
  for (int64_t q = 0; q < rep.n_tokens; ++q) {
    int64_t chunk = q / cfg.chunk_tokens;
    os << q << '\t' << chunk << '\t' << (q - chunk * cfg.chunk_tokens) << '\t'
       << rep.lookahead[static_cast<size_t>(q)] << '\t'
       << rep.past_reach[static_cast<size_t>(q)] << '\t' << (all_const ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace streamg2p
