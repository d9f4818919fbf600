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
#include <vector>

#include "streamg2p/common.hpp"

namespace streamg2p {

// Streaming and architecture configuration.
//
// Tokens are grouped into chunks of chunk_tokens (C). A token may attend to
// its whole chunk, to past_tokens (P) tokens of history anchored at the
// chunk start, and -- in the first attention layer only -- to mla_tokens (M)
// tokens beyond the chunk (the minimum-look-ahead window). Each token is
// upsampled to `upsample` (U) encoder frames before the first layer.
struct StreamingConfig {
  int chunk_tokens = 5;   // C
  int past_tokens = 10;   // P
  int mla_tokens = 0;     // M; applied to layer 1 only
  int upsample = 8;       // U, frames per token
  int layers = 4;         // L

  std::vector<int> intermediate_layers = {2};  // 1-based, subset of {1..L-1}
  double intermediate_weight = 1.0 / 3.0;

  int d_model = 128;
  int n_heads = 4;
  int conv_kernel = 8;
  int ff_dim = 256;
  double dropout = 0.1;

  // Whether the past window is anchored at the chunk start (cache-friendly,
  // the default) or at each token individually. See analyze-mask docs.
  enum class PastAnchor { kChunkStart, kToken };
  PastAnchor past_anchor = PastAnchor::kChunkStart;

  // When true every token attends to the full sequence (offline topology);
  // chunk/past/MLA settings are ignored by the mask builders.
  bool full_context = false;

  void validate() const;

  // Relative-position bias extents in frames (offsets beyond are clamped).
  int rel_bias_past_frames() const { return (past_tokens + chunk_tokens) * upsample; }
  int rel_bias_future_frames() const { return (chunk_tokens + mla_tokens) * upsample; }
};

// Boolean attend/not-attend matrix for one layer, row = query. Granularity
// is tokens as built and frames after expand_to_frames.
struct LayerMask {
  int layer_index = 1;
  int64_t n = 0;
  std::vector<uint8_t> allowed;  // n*n, row-major

  bool at(int64_t q, int64_t j) const { return allowed[q * n + j] != 0; }
  void set(int64_t q, int64_t j, bool v) { allowed[q * n + j] = v ? 1 : 0; }
};

// Single source of truth for the attention topology; the offline mask
// builder and the streaming engine's window masks both evaluate this.
bool token_may_attend(int64_t q, int64_t j, int64_t n_tokens, const StreamingConfig& cfg,
                      int layer_index);

// Token-granular mask for one layer. Throws ConfigError when layer_index is
// outside [1, L].
LayerMask build_token_mask(int64_t n_tokens, const StreamingConfig& cfg, int layer_index);

// Frame-granular expansion: frame (q, j) is allowed iff token (q/U, j/U) is.
LayerMask expand_to_frames(const LayerMask& token_mask, int upsample);

// All layers at frame granularity, in layer order (index 0 holds layer 1).
std::vector<LayerMask> build_frame_masks(int64_t n_tokens, const StreamingConfig& cfg);

// Rectangular window mask used by the streaming engine: rows are the frames
// of chunk `chunk_index` (chunk_count tokens), columns are the frames of
// [past_count past tokens | chunk | mla_count look-ahead tokens]. Must agree
// exactly with the corresponding rows/columns of the global frame mask.
struct WindowMask {
  int64_t rows = 0, cols = 0;
  std::vector<uint8_t> allowed;
  const uint8_t* data() const { return allowed.data(); }
};
WindowMask build_window_mask(const StreamingConfig& cfg, int layer_index, int64_t chunk_index,
                             int chunk_count, int past_count, int mla_count);

// Receptive-field analysis by boolean composition of the per-layer masks.
enum class LookaheadMode { kChunkAware, kRegular };

struct ReceptiveFieldReport {
  LookaheadMode mode = LookaheadMode::kChunkAware;
  int64_t n_tokens = 0;
  int layers = 0;
  std::vector<int> lookahead;   // per token, after all layers
  std::vector<int> past_reach;  // per token, after all layers
  // constant_future[l-1]: future reach after composing l layers equals the
  // reach after one layer (the chunk-aware guarantee; fails for regular).
  std::vector<uint8_t> constant_future;
  // past reach after composing 1..L layers, max over tokens (monotone).
  std::vector<int> max_past_by_depth;
};

// mode kChunkAware composes the config's masks; kRegular composes a uniform
// causal-plus-w-future window per layer (the linear-growth baseline).
ReceptiveFieldReport effective_lookahead(const StreamingConfig& cfg, int64_t n_tokens,
                                         LookaheadMode mode, int regular_lookahead = 1);

// Plain-text grid rendering (rows = queries, '#' attend, '.' not).
std::string render_mask(const LayerMask& mask);

// Tab-separated receptive-field table; one row per token:
// token  chunk  offset  lookahead  past_reach  constant_future
std::string receptive_field_table(const ReceptiveFieldReport& report, const StreamingConfig& cfg);

}  // namespace streamg2p
