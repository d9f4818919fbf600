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

#include <set>

#include "doctest.h"
#include "streamg2p/masking.hpp"
#include "streamg2p/rng.hpp"

using namespace streamg2p;

namespace {

StreamingConfig cfg_of(int c, int p, int m, int layers = 4, int u = 1) {
  StreamingConfig cfg;
  cfg.chunk_tokens = c;
  cfg.past_tokens = p;
  cfg.mla_tokens = m;
  cfg.layers = layers;
  cfg.upsample = u;
  cfg.intermediate_layers = {};
  return cfg;
}

std::set<int64_t> attended(const LayerMask& m, int64_t q) {
  std::set<int64_t> out;
  for (int64_t j = 0; j < m.n; ++j)
    if (m.at(q, j)) out.insert(j);
  return out;
}

}  // namespace

TEST_CASE("token mask: chunk plus past context (C=3, P=3, M=0)") {
  auto cfg = cfg_of(3, 3, 0);
  auto m = build_token_mask(9, cfg, 2);
  // token 4 sits in chunk {3,4,5}; past context reaches back to 0
  CHECK(attended(m, 4) == std::set<int64_t>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("token mask: chunk-final token gains the MLA window in layer 1 only") {
  auto cfg = cfg_of(3, 3, 1);
  auto l1 = build_token_mask(9, cfg, 1);
  CHECK(attended(l1, 5) == std::set<int64_t>{0, 1, 2, 3, 4, 5, 6});
  auto l2 = build_token_mask(9, cfg, 2);
  CHECK(attended(l2, 5) == std::set<int64_t>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("token mask: single token attends to itself") {
  auto cfg = cfg_of(5, 10, 2);
  auto m = build_token_mask(1, cfg, 1);
  CHECK(m.n == 1);
  CHECK(m.at(0, 0));
}

TEST_CASE("token mask: layer index validation and diagonal invariant") {
  auto cfg = cfg_of(3, 2, 1);
  CHECK_THROWS_AS(build_token_mask(6, cfg, 0), ConfigError);
  CHECK_THROWS_AS(build_token_mask(6, cfg, 5), ConfigError);
  for (int layer = 1; layer <= cfg.layers; ++layer) {
    auto m = build_token_mask(7, cfg, layer);
    for (int64_t q = 0; q < m.n; ++q) CHECK(m.at(q, q));
  }
}

TEST_CASE("layers >= 2 share one mask; layer 1 differs exactly by the MLA window") {
  Rng rng(404);
  for (int it = 0; it < 30; ++it) {
    auto cfg = cfg_of(static_cast<int>(rng.uniform_int(1, 5)), static_cast<int>(rng.uniform_int(0, 6)),
                      static_cast<int>(rng.uniform_int(0, 3)), static_cast<int>(rng.uniform_int(2, 6)));
    int64_t n = rng.uniform_int(cfg.chunk_tokens, 16);
    auto l1 = build_token_mask(n, cfg, 1);
    auto l2 = build_token_mask(n, cfg, 2);
    for (int l = 3; l <= cfg.layers; ++l) CHECK(build_token_mask(n, cfg, l).allowed == l2.allowed);
    for (int64_t q = 0; q < n; ++q) {
      int64_t chunk_end = std::min((q / cfg.chunk_tokens + 1) * int64_t{cfg.chunk_tokens}, n);
      for (int64_t j = 0; j < n; ++j) {
        bool in_mla = j >= chunk_end && j < chunk_end + cfg.mla_tokens;
        if (in_mla)
          CHECK(l1.at(q, j) == true);
        if (!in_mla)
          CHECK(l1.at(q, j) == l2.at(q, j));
        if (l2.at(q, j)) CHECK(l1.at(q, j));  // layer 1 is a superset
      }
    }
  }
}

TEST_CASE("expand_to_frames: identity at U=1 and block structure") {
  auto cfg = cfg_of(2, 1, 0);
  auto tok = build_token_mask(4, cfg, 1);
  auto same = expand_to_frames(tok, 1);
  CHECK(same.allowed == tok.allowed);

  LayerMask tiny;
  tiny.n = 2;
  tiny.allowed = {1, 0, 1, 1};
  auto f = expand_to_frames(tiny, 2);
  CHECK(f.n == 4);
  // 2x2 blocks
  for (int64_t q = 0; q < 4; ++q)
    for (int64_t j = 0; j < 4; ++j) CHECK(f.at(q, j) == tiny.at(q / 2, j / 2));
}

TEST_CASE("expand_to_frames: chunk 0 frames attend only chunk 0 frames (C=2,P=0,U=2)") {
  auto cfg = cfg_of(2, 0, 0, 4, 2);
  auto f = expand_to_frames(build_token_mask(4, cfg, 2), cfg.upsample);
  for (int64_t q = 0; q < 4; ++q)  // frames of tokens 0..1
    for (int64_t j = 0; j < 8; ++j) CHECK(f.at(q, j) == (j < 4));
}

TEST_CASE("frame mask downsampling recovers the token mask (any sample point)") {
  Rng rng(88);
  for (int it = 0; it < 25; ++it) {
    auto cfg = cfg_of(static_cast<int>(rng.uniform_int(1, 4)), static_cast<int>(rng.uniform_int(0, 4)),
                      static_cast<int>(rng.uniform_int(0, 2)), 3,
                      static_cast<int>(rng.uniform_int(1, 4)));
    int64_t n = rng.uniform_int(cfg.chunk_tokens, 10);
    auto tok = build_token_mask(n, cfg, 1);
    auto frm = expand_to_frames(tok, cfg.upsample);
    int64_t a = rng.uniform_int(0, cfg.upsample - 1);
    int64_t b = rng.uniform_int(0, cfg.upsample - 1);
    for (int64_t q = 0; q < n; ++q)
      for (int64_t j = 0; j < n; ++j)
        CHECK(frm.at(q * cfg.upsample + a, j * cfg.upsample + b) == tok.at(q, j));
  }
}

TEST_CASE("effective lookahead: chunk-aware ranges are [C-1..0] and [C+M-1..M]") {
  {
    auto cfg = cfg_of(3, 3, 0, 4);
    auto rep = effective_lookahead(cfg, 9, LookaheadMode::kChunkAware);
    // per chunk offset: 2,1,0 (away from the sequence tail)
    CHECK(rep.lookahead[0] == 2);
    CHECK(rep.lookahead[1] == 1);
    CHECK(rep.lookahead[2] == 0);
    CHECK(rep.lookahead[3] == 2);
    CHECK(rep.lookahead[5] == 0);
  }
  {
    auto cfg = cfg_of(5, 10, 1, 4);
    auto rep = effective_lookahead(cfg, 16, LookaheadMode::kChunkAware);
    for (int off = 0; off < 5; ++off) CHECK(rep.lookahead[static_cast<size_t>(off)] == 5 - off);
    // i.e. the range [C+M-1 .. M] = [5..1]
    CHECK(rep.lookahead[0] == 5);
    CHECK(rep.lookahead[4] == 1);
  }
}

TEST_CASE("effective lookahead: regular windows grow linearly with depth") {
  auto cfg = cfg_of(3, 3, 0, 8);
  auto rep = effective_lookahead(cfg, 32, LookaheadMode::kRegular, 1);
  CHECK(rep.lookahead[0] == 8);  // L*w with L=8, w=1
  CHECK(rep.lookahead[10] == 8);
  CHECK(rep.constant_future[0] == 1);
  CHECK(rep.constant_future[7] == 0);  // future reach keeps growing
}

TEST_CASE("composed future reach is within-chunk remainder plus M, independent of L") {
  Rng rng(2024);
  for (int it = 0; it < 20; ++it) {
    int c = static_cast<int>(rng.uniform_int(2, 5));
    int p = static_cast<int>(rng.uniform_int(0, 6));
    int m = static_cast<int>(rng.uniform_int(0, 2));
    std::vector<int> prev_lookahead;
    for (int layers : {2, 4, 8}) {
      auto cfg = cfg_of(c, p, m, layers);
      int64_t n = 4 * c + m;  // leave room so interior chunks are untruncated
      auto rep = effective_lookahead(cfg, n, LookaheadMode::kChunkAware);
      for (uint8_t flag : rep.constant_future) CHECK(flag == 1);
      for (int64_t q = 0; q < 3 * c; ++q) {
        int offset = static_cast<int>(q % c);
        CHECK(rep.lookahead[static_cast<size_t>(q)] == (c - 1 - offset) + m);
      }
      if (!prev_lookahead.empty()) CHECK(prev_lookahead == rep.lookahead);  // same for all L
      prev_lookahead = rep.lookahead;
    }
  }
}

TEST_CASE("past reach grows monotonically with depth") {
  Rng rng(515);
  for (int it = 0; it < 15; ++it) {
    auto cfg = cfg_of(static_cast<int>(rng.uniform_int(2, 5)), static_cast<int>(rng.uniform_int(1, 8)),
                      static_cast<int>(rng.uniform_int(0, 2)), 6);
    auto rep = effective_lookahead(cfg, 30, LookaheadMode::kChunkAware);
    for (size_t d = 1; d < rep.max_past_by_depth.size(); ++d)
      CHECK(rep.max_past_by_depth[d] >= rep.max_past_by_depth[d - 1]);
  }
}

TEST_CASE("past anchor switch: token-relative windows never exceed chunk-start windows") {
  auto chunk_anchor = cfg_of(3, 4, 0);
  auto token_anchor = chunk_anchor;
  token_anchor.past_anchor = StreamingConfig::PastAnchor::kToken;
  auto mc = build_token_mask(12, chunk_anchor, 2);
  auto mt = build_token_mask(12, token_anchor, 2);
  for (int64_t q = 0; q < 12; ++q)
    for (int64_t j = 0; j < 12; ++j)
      if (mt.at(q, j)) CHECK(mc.at(q, j));
  // chunk {3,4,5}: under token anchoring, token 5 reaches back to 5-4=1,
  // under chunk anchoring to 3-4=-1 -> 0.
  CHECK(mc.at(5, 0));
  CHECK_FALSE(mt.at(5, 0));
  CHECK(mt.at(5, 1));
}

TEST_CASE("full-context mode ignores chunk structure") {
  auto cfg = cfg_of(2, 1, 0);
  cfg.full_context = true;
  auto m = build_token_mask(6, cfg, 1);
  for (int64_t q = 0; q < 6; ++q)
    for (int64_t j = 0; j < 6; ++j) CHECK(m.at(q, j));
}

TEST_CASE("window mask agrees with the global frame mask") {
  Rng rng(31337);
  for (int it = 0; it < 20; ++it) {
    StreamingConfig cfg = cfg_of(static_cast<int>(rng.uniform_int(1, 4)),
                                 static_cast<int>(rng.uniform_int(0, 5)),
                                 static_cast<int>(rng.uniform_int(0, 2)), 3,
                                 static_cast<int>(rng.uniform_int(1, 3)));
    int64_t n_tokens = rng.uniform_int(cfg.chunk_tokens, 12);
    for (int layer : {1, 2}) {
      auto global = expand_to_frames(build_token_mask(n_tokens, cfg, layer), cfg.upsample);
      int64_t n_chunks = (n_tokens + cfg.chunk_tokens - 1) / cfg.chunk_tokens;
      for (int64_t k = 0; k < n_chunks; ++k) {
        int64_t cs = k * cfg.chunk_tokens;
        int chunk_count = static_cast<int>(std::min<int64_t>(cfg.chunk_tokens, n_tokens - cs));
        int past = static_cast<int>(std::min<int64_t>(cfg.past_tokens, cs));
        int mla = layer == 1 ? static_cast<int>(std::min<int64_t>(
                                   cfg.mla_tokens, n_tokens - (cs + chunk_count)))
                             : 0;
        auto w = build_window_mask(cfg, layer, k, chunk_count, past, mla);
        int64_t u = cfg.upsample;
        int64_t win_first_frame = (cs - past) * u;
        for (int64_t qi = 0; qi < w.rows; ++qi)
          for (int64_t ji = 0; ji < w.cols; ++ji) {
            bool expect = global.at(cs * u + qi, win_first_frame + ji);
            CHECK(static_cast<bool>(w.allowed[static_cast<size_t>(qi * w.cols + ji)]) == expect);
          }
      }
    }
  }
}

TEST_CASE("render_mask draws the attend grid") {
  auto cfg = cfg_of(3, 3, 0, 2);
  auto m = build_token_mask(6, cfg, 1);
  auto text = render_mask(m);
  CHECK(text.find("###...") == 0);  // token 0 sees its chunk only
  auto rep = effective_lookahead(cfg, 6, LookaheadMode::kChunkAware);
  auto table = receptive_field_table(rep, cfg);
  CHECK(table.find("token\tchunk\toffset") == 0);
}
