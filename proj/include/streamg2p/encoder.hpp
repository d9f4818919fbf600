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

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "streamg2p/masking.hpp"
#include "streamg2p/model.hpp"
#include "streamg2p/tape.hpp"

namespace streamg2p {

// Conformer block and encoder forward passes. One implementation serves both
// the offline (full-sequence) path and the streaming engine: the block takes
// a context matrix holding [past | queries | look-ahead] frames and computes
// outputs for the query rows only. Keys and values are recomputed from the
// cached post-layer states of the past tokens; look-ahead rows exist only in
// layer 1, where their keys/values derive purely from per-frame transforms
// of the token embeddings.

template <typename S>
struct BlockResult {
  Val<S> out;                   // [q_len x d]
  Tensor<S> conv_history_next;  // last (kernel-1) depthwise-conv input frames
};

namespace detail {

// Feed-forward module: LN -> linear -> swish -> dropout -> linear -> dropout.
template <typename S>
Val<S> ff_module(Tape<S>& tape, Val<S> x, Param<S>& ln_g, Param<S>& ln_b, LinearP<S>& in,
                 LinearP<S>& out, double p, bool train, Rng* rng) {
  Val<S> h = layer_norm(x, tape.param(ln_g), tape.param(ln_b));
  h = add_row_bias(matmul(h, tape.param(in.w)), tape.param(in.b));
  h = swish(h);
  if (train && rng) h = dropout(h, p, *rng, train);
  h = add_row_bias(matmul(h, tape.param(out.w)), tape.param(out.b));
  if (train && rng) h = dropout(h, p, *rng, train);
  return h;
}

}  // namespace detail

// mask: row-major [q_len*U_frames x ctx_frames] boolean matrix (frame
// granularity). q0_abs / k0_abs are the absolute frame indices of the first
// query row and first context row, used by the relative-position bias.
template <typename S>
BlockResult<S> block_forward(Tape<S>& tape, ModelParams<S>& m, int layer_index, Val<S> x_ctx,
                             int64_t q_begin, int64_t q_len, const uint8_t* mask,
                             int64_t mask_cols, int64_t q0_abs, int64_t k0_abs,
                             const Tensor<S>& conv_history, bool train, Rng* rng) {
  auto& cfg = m.cfg;
  auto& blk = m.blocks[static_cast<size_t>(layer_index - 1)];
  const int64_t d = cfg.d_model;
  const int64_t heads = cfg.n_heads;
  const int64_t dh = d / heads;
  const int64_t ctx_frames = x_ctx.rows();
  if (mask_cols != ctx_frames) throw ShapeError("block_forward: mask/context frame mismatch");
  const double p = cfg.dropout;

  // First macaron half, applied to context rows too: past keys/values are
  // recomputed from cached post-layer states.
  Val<S> h1 = add(x_ctx, scale(detail::ff_module(tape, x_ctx, blk.ln_ff1_g, blk.ln_ff1_b,
                                                 blk.ff1_in, blk.ff1_out, p, train, rng),
                               S(0.5)));

  // Masked multi-head self-attention with clamped relative-position bias.
  Val<S> a_in = layer_norm(h1, tape.param(blk.ln_att_g), tape.param(blk.ln_att_b));
  Val<S> q_in = slice_rows(a_in, q_begin, q_len);
  Val<S> q_all = add_row_bias(matmul(q_in, tape.param(blk.att_q.w)), tape.param(blk.att_q.b));
  Val<S> k_all = add_row_bias(matmul(a_in, tape.param(blk.att_k.w)), tape.param(blk.att_k.b));
  Val<S> v_all = add_row_bias(matmul(a_in, tape.param(blk.att_v.w)), tape.param(blk.att_v.b));
  Val<S> bias_table = tape.param(blk.rel_bias);
  const S inv_sqrt_dh = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  std::vector<Val<S>> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int64_t h = 0; h < heads; ++h) {
    Val<S> qh = slice_cols(q_all, h * dh, dh);
    Val<S> kh = slice_cols(k_all, h * dh, dh);
    Val<S> vh = slice_cols(v_all, h * dh, dh);
    Val<S> scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
    scores = add_rel_bias(scores, bias_table, static_cast<int>(h), q0_abs, k0_abs,
                          cfg.rel_bias_past_frames(), cfg.rel_bias_future_frames());
    Val<S> probs = softmax_masked(scores, mask, q_len, ctx_frames);
    head_outs.push_back(matmul(probs, vh));
  }
  Val<S> attn = concat_cols(head_outs);
  attn = add_row_bias(matmul(attn, tape.param(blk.att_o.w)), tape.param(blk.att_o.b));
  if (train && rng) attn = dropout(attn, p, *rng, train);

  Val<S> h1_q = slice_rows(h1, q_begin, q_len);
  Val<S> h2 = add(h1_q, attn);

  // Convolution module: LN -> pointwise(2d) -> GLU -> causal depthwise ->
  // LN -> swish -> pointwise -> dropout. The depthwise history carries the
  // last kernel-1 GLU output frames across chunks.
  Val<S> c_in = layer_norm(h2, tape.param(blk.ln_conv_g), tape.param(blk.ln_conv_b));
  Val<S> gated = add_row_bias(matmul(c_in, tape.param(blk.conv_pw1.w)), tape.param(blk.conv_pw1.b));
  Val<S> glu = hadamard(slice_cols(gated, 0, d), sigmoid(slice_cols(gated, d, d)));
  Val<S> dw = causal_conv1d(glu, tape.param(blk.conv_dw), conv_history);
  dw = add_row_bias(dw, tape.param(blk.conv_dw_b));
  Val<S> mid = layer_norm(dw, tape.param(blk.ln_conv_mid_g), tape.param(blk.ln_conv_mid_b));
  Val<S> conv = add_row_bias(matmul(swish(mid), tape.param(blk.conv_pw2.w)),
                             tape.param(blk.conv_pw2.b));
  if (train && rng) conv = dropout(conv, p, *rng, train);
  Val<S> h3 = add(h2, conv);

  // Second macaron half and the block's closing normalization.
  Val<S> h4 = add(h3, scale(detail::ff_module(tape, h3, blk.ln_ff2_g, blk.ln_ff2_b, blk.ff2_in,
                                              blk.ff2_out, p, train, rng),
                            S(0.5)));
  BlockResult<S> res{layer_norm(h4, tape.param(blk.ln_out_g), tape.param(blk.ln_out_b)), {}};

  // Next chunk's depthwise history: last kernel-1 rows of [history; glu].
  const int64_t hist = cfg.conv_kernel - 1;
  res.conv_history_next = Tensor<S>({hist, d});
  const Tensor<S>& glu_v = glu.value();
  for (int64_t r = 0; r < hist; ++r) {
    int64_t src = q_len - hist + r;  // may reach into the old history
    for (int64_t c = 0; c < d; ++c)
      res.conv_history_next.at(r, c) =
          src >= 0 ? glu_v.at(src, c) : conv_history.at(src + hist, c);
  }
  return res;
}

// Vocabulary projection shared by the final decoder and intermediate taps.
template <typename S>
Val<S> output_logits(Tape<S>& tape, ModelParams<S>& m, Val<S> hidden) {
  return add_row_bias(matmul(hidden, tape.param(m.out_w)), tape.param(m.out_b));
}

// Self-conditioning: re-inject the intermediate label distribution into the
// hidden stream, per frame: LN(hidden + Project(softmax(logits))).
template <typename S>
Val<S> self_condition(Tape<S>& tape, ModelParams<S>& m, Val<S> hidden, Val<S> logits) {
  Val<S> feedback =
      add_row_bias(matmul(softmax(logits), tape.param(m.sc_w)), tape.param(m.sc_b));
  return layer_norm(add(hidden, feedback), tape.param(m.sc_ln_g), tape.param(m.sc_ln_b));
}

template <typename S>
struct EncoderOutput {
  Val<S> final_hidden;  // [frames x d]
  Val<S> final_logits;  // [frames x labels]
  std::vector<std::pair<int, Val<S>>> intermediate_logits;  // (layer, [frames x labels])
};

// Full-sequence forward with per-layer frame masks (offline path).
template <typename S>
EncoderOutput<S> encoder_forward(Tape<S>& tape, ModelParams<S>& m, const std::vector<int>& tokens,
                                 const std::vector<LayerMask>& frame_masks, bool train = false,
                                 Rng* rng = nullptr) {
  auto& cfg = m.cfg;
  if (static_cast<int>(frame_masks.size()) != cfg.layers)
    throw ShapeError("encoder_forward: need one mask per layer");
  const int64_t frames = static_cast<int64_t>(tokens.size()) * cfg.upsample;

  Val<S> x = upsample_repeat(embedding_lookup(tape.param(m.embedding), tokens), cfg.upsample);
  EncoderOutput<S> out;
  for (int layer = 1; layer <= cfg.layers; ++layer) {
    const LayerMask& mask = frame_masks[static_cast<size_t>(layer - 1)];
    if (mask.n != frames)
      throw ShapeError("encoder_forward: mask built for " + std::to_string(mask.n) +
                       " frames, sequence has " + std::to_string(frames));
    Tensor<S> conv_hist({cfg.conv_kernel - 1, cfg.d_model});  // zeros at stream start
    BlockResult<S> blk = block_forward(tape, m, layer, x, 0, frames, mask.allowed.data(),
                                       frames, 0, 0, conv_hist, train, rng);
    x = blk.out;
    bool is_intermediate = std::find(cfg.intermediate_layers.begin(),
                                     cfg.intermediate_layers.end(),
                                     layer) != cfg.intermediate_layers.end();
    if (is_intermediate) {
      Val<S> logits = output_logits(tape, m, x);
      out.intermediate_logits.emplace_back(layer, logits);
      x = self_condition(tape, m, x, logits);
    }
  }
  out.final_hidden = x;
  out.final_logits = output_logits(tape, m, x);
  return out;
}

}  // namespace streamg2p
