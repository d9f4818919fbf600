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

#include <chrono>
#include <vector>

#include "streamg2p/ctc.hpp"
#include "streamg2p/encoder.hpp"

namespace streamg2p {

// Incremental streaming inference.
//
// Tokens arrive one at a time; chunk k (tokens [kC, kC+C)) is encoded as
// soon as token kC+C+M-1 exists, i.e. after C+M tokens for the first chunk.
// close() flushes the tail with truncated look-ahead, so the concatenated
// emissions equal the offline decode of the full sequence.
//
// Per layer boundary l the engine caches the post-layer hidden frames of the
// last P tokens; attention keys/values are recomputed from them each chunk.
// Look-ahead tokens contribute keys/values to layer 1 only, derived from
// their upsampled embeddings via the same per-frame transforms the offline
// path applies; their own full encoding happens later, in their home chunk.
// The depthwise-conv history carries kernel-1 frames per layer.

struct EmittedSymbol {
  int label = 0;
  int arrival_token_index = 0;  // tokens seen when the symbol was emitted
  int chunk_index = 0;
};

struct LatencyRecord {
  int tokens_waited = 0;  // tokens buffered before the first chunk ran
  double first_chunk_seconds = 0.0;
  std::vector<double> chunk_compute_seconds;

  // Start-latency model: (tokens waited) * tau + first-chunk compute.
  double modeled_start(double tau) const {
    return static_cast<double>(tokens_waited) * tau + first_chunk_seconds;
  }
};

template <typename S>
class StreamingEngine {
 public:
  // The model is shared and treated as read-only; each stream owns its state.
  explicit StreamingEngine(ModelParams<S>& model) : model_(&model), cfg_(model.cfg) {
    cfg_.validate();
    if (cfg_.full_context)
      throw ConfigError("streaming engine requires a streaming mask configuration");
    cache_.assign(static_cast<size_t>(cfg_.layers),
                  Tensor<S>({0, cfg_.d_model}));
    conv_hist_.assign(static_cast<size_t>(cfg_.layers),
                      Tensor<S>({cfg_.conv_kernel - 1, cfg_.d_model}));
  }

  bool closed() const { return closed_; }
  int chunks_processed() const { return chunks_processed_; }
  const std::vector<EmittedSymbol>& emitted() const { return emitted_; }
  const LatencyRecord& latency() const { return latency_; }
  int64_t peak_window_frames() const { return peak_window_frames_; }

  void enable_hidden_capture() { capture_hidden_ = true; }
  // Final-layer hidden frames of all processed chunks, concatenated.
  Tensor<S> captured_hidden() const {
    int64_t rows = 0;
    for (const auto& t : hidden_chunks_) rows += t.rows();
    Tensor<S> out({rows, cfg_.d_model});
    int64_t r0 = 0;
    for (const auto& t : hidden_chunks_) {
      std::copy(t.data.begin(), t.data.end(), out.data.begin() + r0 * cfg_.d_model);
      r0 += t.rows();
    }
    return out;
  }

  std::vector<EmittedSymbol> push_token(int token) {
    if (closed_) throw StateError("push_token on a closed stream");
    tokens_.push_back(token);
    size_t before = emitted_.size();
    // chunk k needs tokens through index kC+C+M-1
    while ((next_chunk_ + 1) * cfg_.chunk_tokens + cfg_.mla_tokens <=
           static_cast<int64_t>(tokens_.size()))
      process_chunk(next_chunk_);
    return std::vector<EmittedSymbol>(emitted_.begin() + static_cast<int64_t>(before),
                                      emitted_.end());
  }

  std::vector<EmittedSymbol> close() {
    if (closed_) throw StateError("close on a closed stream");
    size_t before = emitted_.size();
    while (next_chunk_ * cfg_.chunk_tokens < static_cast<int64_t>(tokens_.size()))
      process_chunk(next_chunk_);
    closed_ = true;
    return std::vector<EmittedSymbol>(emitted_.begin() + static_cast<int64_t>(before),
                                      emitted_.end());
  }

 private:
  void process_chunk(int64_t k) {
    auto t_begin = std::chrono::steady_clock::now();
    const int64_t n = static_cast<int64_t>(tokens_.size());
    const int64_t cs = k * cfg_.chunk_tokens;
    const int count = static_cast<int>(std::min<int64_t>(cfg_.chunk_tokens, n - cs));
    const int past = static_cast<int>(std::min<int64_t>(cfg_.past_tokens, cs));
    const int mla =
        static_cast<int>(std::min<int64_t>(cfg_.mla_tokens, n - (cs + count)));
    const int u = cfg_.upsample;

    Tape<S> tape(/*recording=*/false);
    std::vector<int> chunk_tokens(tokens_.begin() + cs, tokens_.begin() + cs + count);
    std::vector<int> mla_tokens(tokens_.begin() + cs + count,
                                tokens_.begin() + cs + count + mla);
    Val<S> x = upsample_repeat(embedding_lookup(tape.param(model_->embedding), chunk_tokens),
                               u);
    Val<S> mla_x;
    if (mla > 0)
      mla_x = upsample_repeat(embedding_lookup(tape.param(model_->embedding), mla_tokens), u);

    for (int layer = 1; layer <= cfg_.layers; ++layer) {
      Tensor<S>& cache = cache_[static_cast<size_t>(layer - 1)];
      if (cache.rows() != static_cast<int64_t>(past) * u)
        throw StateError("engine cache out of sync at layer " + std::to_string(layer));

      std::vector<Val<S>> parts;
      if (cache.rows() > 0) parts.push_back(tape.leaf(cache));
      parts.push_back(x);
      int layer_mla = layer == 1 ? mla : 0;
      if (layer_mla > 0) parts.push_back(mla_x);
      Val<S> ctx = parts.size() == 1 ? parts[0] : concat_rows(parts);
      peak_window_frames_ = std::max(peak_window_frames_, ctx.rows());

      WindowMask mask = build_window_mask(cfg_, layer, k, count, past, layer_mla);
      BlockResult<S> blk = block_forward(
          tape, *model_, layer, ctx, /*q_begin=*/static_cast<int64_t>(past) * u,
          /*q_len=*/static_cast<int64_t>(count) * u, mask.data(), mask.cols,
          /*q0_abs=*/cs * u, /*k0_abs=*/(cs - past) * u,
          conv_hist_[static_cast<size_t>(layer - 1)], /*train=*/false, nullptr);
      conv_hist_[static_cast<size_t>(layer - 1)] = std::move(blk.conv_history_next);

      // This chunk's layer-(l-1) output becomes part of the next chunk's
      // past context at layer l.
      append_to_cache(layer - 1, x.value());
      x = blk.out;
      bool is_intermediate =
          std::find(cfg_.intermediate_layers.begin(), cfg_.intermediate_layers.end(), layer) !=
          cfg_.intermediate_layers.end();
      if (is_intermediate) {
        Val<S> logits = output_logits(tape, *model_, x);
        x = self_condition(tape, *model_, x, logits);
      }
    }
    if (capture_hidden_) hidden_chunks_.push_back(x.value());

    Val<S> logits = output_logits(tape, *model_, x);
    std::vector<int> symbols = greedy_decode_chunk(logits.value(), collapse_);

    auto t_end = std::chrono::steady_clock::now();
    double seconds = std::chrono::duration<double>(t_end - t_begin).count();
    if (chunks_processed_ == 0) {
      latency_.tokens_waited = static_cast<int>(n);
      latency_.first_chunk_seconds = seconds;
    }
    latency_.chunk_compute_seconds.push_back(seconds);
    for (int s : symbols)
      emitted_.push_back(EmittedSymbol{s, static_cast<int>(n), static_cast<int>(k)});
    ++chunks_processed_;
    next_chunk_ = k + 1;
  }

  void append_to_cache(int layer_boundary, const Tensor<S>& chunk_frames) {
    Tensor<S>& cache = cache_[static_cast<size_t>(layer_boundary)];
    const int64_t d = cfg_.d_model;
    const int64_t keep = static_cast<int64_t>(cfg_.past_tokens) * cfg_.upsample;
    Tensor<S> merged({cache.rows() + chunk_frames.rows(), d});
    std::copy(cache.data.begin(), cache.data.end(), merged.data.begin());
    std::copy(chunk_frames.data.begin(), chunk_frames.data.end(),
              merged.data.begin() + cache.rows() * d);
    int64_t rows = std::min(keep, merged.rows());
    Tensor<S> trimmed({rows, d});
    std::copy(merged.data.end() - rows * d, merged.data.end(), trimmed.data.begin());
    cache = std::move(trimmed);
  }

  ModelParams<S>* model_;
  StreamingConfig cfg_;
  std::vector<int> tokens_;
  int64_t next_chunk_ = 0;
  bool closed_ = false;
  std::vector<Tensor<S>> cache_;      // [layer boundary] -> last P tokens' frames
  std::vector<Tensor<S>> conv_hist_;  // [layer] -> last kernel-1 conv input frames
  CollapseState collapse_;
  std::vector<EmittedSymbol> emitted_;
  LatencyRecord latency_;
  int chunks_processed_ = 0;
  int64_t peak_window_frames_ = 0;
  bool capture_hidden_ = false;
  std::vector<Tensor<S>> hidden_chunks_;
};

// Runs one stream through the engine and reports its latency record.
template <typename S>
LatencyRecord bench_stream(ModelParams<S>& model, const std::vector<int>& tokens) {
  StreamingEngine<S> engine(model);
  for (int t : tokens) engine.push_token(t);
  engine.close();
  return engine.latency();
}

// Offline reference: full-sequence masked forward + greedy decode. The
// streaming engine must reproduce this exactly, symbol for symbol.
template <typename S>
std::vector<int> offline_greedy_decode(ModelParams<S>& model, const std::vector<int>& tokens,
                                       Tensor<S>* hidden_out = nullptr) {
  if (tokens.empty()) return {};
  Tape<S> tape(/*recording=*/false);
  auto masks = build_frame_masks(static_cast<int64_t>(tokens.size()), model.cfg);
  EncoderOutput<S> out = encoder_forward(tape, model, tokens, masks);
  if (hidden_out != nullptr) *hidden_out = out.final_hidden.value();
  return greedy_decode(out.final_logits.value());
}

}  // namespace streamg2p
