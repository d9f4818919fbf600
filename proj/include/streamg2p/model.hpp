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

#include <cmath>
#include <string>
#include <vector>

#include "streamg2p/masking.hpp"
#include "streamg2p/rng.hpp"
#include "streamg2p/tensor.hpp"
#include "streamg2p/vocab.hpp"

namespace streamg2p {

template <typename S>
struct LinearP {
  Param<S> w, b;
};

// One Conformer block: macaron feed-forward halves around masked multi-head
// self-attention and a gated causal depthwise convolution module. Layer
// normalization is used inside the convolution module (batch statistics are
// ill-defined in streaming).
template <typename S>
struct BlockParams {
  Param<S> ln_ff1_g, ln_ff1_b;
  LinearP<S> ff1_in, ff1_out;

  Param<S> ln_att_g, ln_att_b;
  LinearP<S> att_q, att_k, att_v, att_o;
  Param<S> rel_bias;  // [n_heads x (r_past + r_fut + 1)], clamped offsets

  Param<S> ln_conv_g, ln_conv_b;
  LinearP<S> conv_pw1;     // d -> 2d, gated
  Param<S> conv_dw;        // [kernel x d] depthwise
  Param<S> conv_dw_b;      // [d]
  Param<S> ln_conv_mid_g, ln_conv_mid_b;
  LinearP<S> conv_pw2;     // d -> d

  Param<S> ln_ff2_g, ln_ff2_b;
  LinearP<S> ff2_in, ff2_out;

  Param<S> ln_out_g, ln_out_b;
};

template <typename S>
struct ModelParams {
  StreamingConfig cfg;

  Param<S> embedding;  // [graphemes x d]
  std::vector<BlockParams<S>> blocks;
  Param<S> out_w, out_b;  // d -> labels, shared by the final and intermediate taps
  Param<S> sc_w, sc_b;    // labels -> d, self-conditioning feedback projection
  Param<S> sc_ln_g, sc_ln_b;

  std::vector<Param<S>*> all_params();
  std::vector<const Param<S>*> all_params() const;
  int64_t parameter_count() const;
  void init(Rng init_stream);
  void zero_grad();
};

namespace detail {

template <typename S>
void init_linear(Param<S>& w, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(w.value.rows() + w.value.cols()));
  for (auto& v : w.value.data) v = static_cast<S>(rng.uniform(-limit, limit));
}

}  // namespace detail

template <typename S>
std::vector<Param<S>*> ModelParams<S>::all_params() {
  std::vector<Param<S>*> out;
  out.push_back(&embedding);
  for (auto& b : blocks) {
    for (Param<S>* p :
         {&b.ln_ff1_g, &b.ln_ff1_b, &b.ff1_in.w, &b.ff1_in.b, &b.ff1_out.w, &b.ff1_out.b,
          &b.ln_att_g, &b.ln_att_b, &b.att_q.w, &b.att_q.b, &b.att_k.w, &b.att_k.b, &b.att_v.w,
          &b.att_v.b, &b.att_o.w, &b.att_o.b, &b.rel_bias, &b.ln_conv_g, &b.ln_conv_b,
          &b.conv_pw1.w, &b.conv_pw1.b, &b.conv_dw, &b.conv_dw_b, &b.ln_conv_mid_g,
          &b.ln_conv_mid_b, &b.conv_pw2.w, &b.conv_pw2.b, &b.ln_ff2_g, &b.ln_ff2_b, &b.ff2_in.w,
          &b.ff2_in.b, &b.ff2_out.w, &b.ff2_out.b, &b.ln_out_g, &b.ln_out_b})
      out.push_back(p);
  }
  for (Param<S>* p : {&out_w, &out_b, &sc_w, &sc_b, &sc_ln_g, &sc_ln_b}) out.push_back(p);
  return out;
}

template <typename S>
std::vector<const Param<S>*> ModelParams<S>::all_params() const {
  auto mutable_list = const_cast<ModelParams<S>*>(this)->all_params();
  return std::vector<const Param<S>*>(mutable_list.begin(), mutable_list.end());
}

template <typename S>
int64_t ModelParams<S>::parameter_count() const {
  int64_t n = 0;
  for (const Param<S>* p : all_params()) n += p->value.numel();
  return n;
}

template <typename S>
void ModelParams<S>::zero_grad() {
  for (Param<S>* p : all_params()) p->zero_grad();
}

template <typename S>
void ModelParams<S>::init(Rng rng) {
  cfg.validate();
  const int64_t d = cfg.d_model;
  const int64_t ff = cfg.ff_dim;
  const int64_t k = cfg.conv_kernel;
  const int64_t heads = cfg.n_heads;
  const int64_t labels = LabelVocab::instance().size();
  const int64_t graphemes = GraphemeVocab::instance().size();
  const int64_t bias_width = cfg.rel_bias_past_frames() + cfg.rel_bias_future_frames() + 1;

  auto name_of = [](const std::string& base, const std::string& leaf) { return base + "." + leaf; };
  auto setup_linear = [&](LinearP<S>& lin, const std::string& base, int64_t in, int64_t out_dim) {
    lin.w.name = name_of(base, "w");
    lin.w.set_shape({in, out_dim});
    lin.b.name = name_of(base, "b");
    lin.b.set_shape({out_dim});
  };
  auto setup_ln = [&](Param<S>& g, Param<S>& b, const std::string& base) {
    g.name = name_of(base, "g");
    g.set_shape({d});
    b.name = name_of(base, "b");
    b.set_shape({d});
  };

  embedding.name = "embedding";
  embedding.set_shape({graphemes, d});

  blocks.assign(static_cast<size_t>(cfg.layers), BlockParams<S>{});
  for (int l = 0; l < cfg.layers; ++l) {
    auto& blk = blocks[static_cast<size_t>(l)];
    std::string base = "block" + std::to_string(l);
    setup_ln(blk.ln_ff1_g, blk.ln_ff1_b, base + ".ff1.ln");
    setup_linear(blk.ff1_in, base + ".ff1.in", d, ff);
    setup_linear(blk.ff1_out, base + ".ff1.out", ff, d);
    setup_ln(blk.ln_att_g, blk.ln_att_b, base + ".att.ln");
    setup_linear(blk.att_q, base + ".att.q", d, d);
    setup_linear(blk.att_k, base + ".att.k", d, d);
    setup_linear(blk.att_v, base + ".att.v", d, d);
    setup_linear(blk.att_o, base + ".att.o", d, d);
    blk.rel_bias.name = base + ".att.rel_bias";
    blk.rel_bias.set_shape({heads, bias_width});
    setup_ln(blk.ln_conv_g, blk.ln_conv_b, base + ".conv.ln");
    setup_linear(blk.conv_pw1, base + ".conv.pw1", d, 2 * d);
    blk.conv_dw.name = base + ".conv.dw";
    blk.conv_dw.set_shape({k, d});
    blk.conv_dw_b.name = base + ".conv.dw_b";
    blk.conv_dw_b.set_shape({d});
    setup_ln(blk.ln_conv_mid_g, blk.ln_conv_mid_b, base + ".conv.mid_ln");
    setup_linear(blk.conv_pw2, base + ".conv.pw2", d, d);
    setup_ln(blk.ln_ff2_g, blk.ln_ff2_b, base + ".ff2.ln");
    setup_linear(blk.ff2_in, base + ".ff2.in", d, ff);
    setup_linear(blk.ff2_out, base + ".ff2.out", ff, d);
    setup_ln(blk.ln_out_g, blk.ln_out_b, base + ".out_ln");
  }
  out_w.name = "out.w";
  out_w.set_shape({d, labels});
  out_b.name = "out.b";
  out_b.set_shape({labels});
  sc_w.name = "sc.w";
  sc_w.set_shape({labels, d});
  sc_b.name = "sc.b";
  sc_b.set_shape({d});
  sc_ln_g.name = "sc.ln.g";
  sc_ln_g.set_shape({d});
  sc_ln_b.name = "sc.ln.b";
  sc_ln_b.set_shape({d});

  // Deterministic draw order: the canonical parameter list.
  Rng init = rng.stream("init");
  for (Param<S>* p : all_params()) {
    const std::string& n = p->name;
    bool is_gain = n.size() >= 2 && n.substr(n.size() - 2) == ".g";
    bool is_bias = !is_gain && (n.back() == 'b' || n.substr(n.size() - 2) == ".b");
    if (n == "embedding") {
      double std = 1.0 / std::sqrt(static_cast<double>(d));
      for (auto& v : p->value.data) v = static_cast<S>(init.normal() * std);
    } else if (n.find("rel_bias") != std::string::npos) {
      p->value.fill(S(0));
    } else if (is_gain) {
      p->value.fill(S(1));
    } else if (is_bias) {
      p->value.fill(S(0));
    } else {
      detail::init_linear(*p, init);
    }
  }
}

}  // namespace streamg2p
