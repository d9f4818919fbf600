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
#include <limits>
#include <type_traits>
#include <vector>

#include "streamg2p/tape.hpp"
#include "streamg2p/tensor.hpp"

namespace streamg2p {

// CTC loss via the log-space forward-backward recursion over the
// blank-interleaved extended target. The recursion runs in double regardless
// of the tensor scalar type; -inf is the documented log-zero sentinel and
// logsumexp subtracts the max before exponentiating.
//
// An unalignable target (more symbols plus required repeat-separating blanks
// than frames) yields an infinite loss and a zero gradient rather than a
// crash; training wraps this in ctc_loss_clamped.

constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline double log_sum_exp(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double log_sum_exp(double a, double b, double c) {
  return log_sum_exp(log_sum_exp(a, b), c);
}

struct CtcResult {
  double loss = 0.0;      // -log P(target | log_probs); +inf when infeasible
  bool feasible = true;
};

// Minimum frames needed to emit the target (repeats force a blank between).
inline int64_t ctc_min_frames(const std::vector<int>& target) {
  int64_t need = static_cast<int64_t>(target.size());
  for (size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++need;
  return need;
}

// Plain forward-backward. grad_out, when non-null, receives d(loss)/d(log_probs)
// (same shape as log_probs; zeros when infeasible).
template <typename S>
CtcResult ctc_forward_backward(const Tensor<S>& log_probs, const std::vector<int>& target,
                               int blank, std::type_identity_t<Tensor<S>*> grad_out) {
  const int64_t frames = log_probs.rows();
  const int64_t vocab = log_probs.cols();
  for (int v : target) {
    if (v == blank) throw InputError("ctc: blank in target sequence");
    if (v < 0 || v >= vocab) throw InputError("ctc: target symbol out of vocabulary");
  }
  if (grad_out != nullptr) {
    *grad_out = Tensor<S>(log_probs.shape);
  }
  CtcResult res;
  if (frames < ctc_min_frames(target) || frames == 0) {
    res.loss = std::numeric_limits<double>::infinity();
    res.feasible = false;
    return res;
  }

  const int64_t ss = 2 * static_cast<int64_t>(target.size()) + 1;
  auto label_at = [&](int64_t s) {
    return (s % 2 == 0) ? blank : target[static_cast<size_t>(s / 2)];
  };
  auto lp = [&](int64_t t, int64_t s) {
    return static_cast<double>(log_probs.at(t, label_at(s)));
  };

  std::vector<double> alpha(static_cast<size_t>(frames * ss), kLogZero);
  auto a = [&](int64_t t, int64_t s) -> double& {
    return alpha[static_cast<size_t>(t * ss + s)];
  };
  a(0, 0) = lp(0, 0);
  if (ss > 1) a(0, 1) = lp(0, 1);
  for (int64_t t = 1; t < frames; ++t)
    for (int64_t s = 0; s < ss; ++s) {
      double best = a(t - 1, s);
      if (s >= 1) best = log_sum_exp(best, a(t - 1, s - 1));
      if (s >= 2 && label_at(s) != blank && label_at(s) != label_at(s - 2))
        best = log_sum_exp(best, a(t - 1, s - 2));
      a(t, s) = best == kLogZero ? kLogZero : best + lp(t, s);
    }

  double log_p = a(frames - 1, ss - 1);
  if (ss > 1) log_p = log_sum_exp(log_p, a(frames - 1, ss - 2));
  res.loss = -log_p;
  if (log_p == kLogZero) {
    res.feasible = false;  // should not occur for feasible targets
    return res;
  }
  if (grad_out == nullptr) return res;

  // beta[t][s]: log-prob of completing the target from state s after frame
  // t (excludes frame t's own emission).
  std::vector<double> beta(static_cast<size_t>(frames * ss), kLogZero);
  auto b = [&](int64_t t, int64_t s) -> double& {
    return beta[static_cast<size_t>(t * ss + s)];
  };
  b(frames - 1, ss - 1) = 0.0;
  if (ss > 1) b(frames - 1, ss - 2) = 0.0;
  for (int64_t t = frames - 2; t >= 0; --t)
    for (int64_t s = 0; s < ss; ++s) {
      double acc = b(t + 1, s) == kLogZero ? kLogZero : b(t + 1, s) + lp(t + 1, s);
      if (s + 1 < ss && b(t + 1, s + 1) != kLogZero)
        acc = log_sum_exp(acc, b(t + 1, s + 1) + lp(t + 1, s + 1));
      if (s + 2 < ss && label_at(s + 2) != blank && label_at(s + 2) != label_at(s) &&
          b(t + 1, s + 2) != kLogZero)
        acc = log_sum_exp(acc, b(t + 1, s + 2) + lp(t + 1, s + 2));
      b(t, s) = acc;
    }

  // d(-log P)/d(log_probs[t][k]) = -sum_{s: label(s)=k} exp(alpha+beta-logP)
  for (int64_t t = 0; t < frames; ++t)
    for (int64_t s = 0; s < ss; ++s) {
      double ab = a(t, s) == kLogZero || b(t, s) == kLogZero ? kLogZero : a(t, s) + b(t, s);
      if (ab == kLogZero) continue;
      grad_out->at(t, label_at(s)) -= static_cast<S>(std::exp(ab - log_p));
    }
  return res;
}

// Tape operation: scalar loss differentiable w.r.t. log_probs. Infeasible
// targets produce a +inf value and push no gradient.
template <typename S>
Val<S> ctc_loss(Val<S> log_probs, const std::vector<int>& target, int blank = 0) {
  Tape<S>& t = *log_probs.tape;
  auto grad = std::make_shared<Tensor<S>>();
  CtcResult r = ctc_forward_backward(log_probs.value(), target, blank,
                                     t.recording() ? grad.get() : nullptr);
  Tensor<S> out({1});
  out[0] = static_cast<S>(r.loss);
  int32_t li = log_probs.id;
  bool needs = t.needs_grad(li) && r.feasible;
  return t.push(std::move(out), needs, [li, grad](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    if (Tensor<S>* gl = t.maybe_grad(li))
      for (size_t i = 0; i < gl->data.size(); ++i) gl->data[i] += g[0] * grad->data[i];
  });
}

// Training-friendly wrapper: infeasible targets contribute a flat clamp loss
// (no gradient) so a batch survives; occurrences are counted.
template <typename S>
Val<S> ctc_loss_clamped(Val<S> log_probs, const std::vector<int>& target, S clamp,
                        int* clamp_counter, int blank = 0) {
  Val<S> raw = ctc_loss(log_probs, target, blank);
  if (std::isinf(static_cast<double>(raw.value()[0]))) {
    if (clamp_counter != nullptr) ++(*clamp_counter);
    Tensor<S> out({1});
    out[0] = clamp;
    return log_probs.tape->push(std::move(out), false);
  }
  return raw;
}

// Combined objective: final CTC loss plus weight * sum of intermediate CTC
// losses, all over the same target.
template <typename S>
Val<S> total_ctc_loss(Val<S> final_log_probs,
                      const std::vector<Val<S>>& intermediate_log_probs,
                      const std::vector<int>& target, S intermediate_weight, S clamp,
                      int* clamp_counter, int blank = 0) {
  Val<S> loss = ctc_loss_clamped(final_log_probs, target, clamp, clamp_counter, blank);
  if (intermediate_log_probs.empty() || intermediate_weight == S(0)) return loss;
  Val<S> inter = ctc_loss_clamped(intermediate_log_probs[0], target, clamp, nullptr, blank);
  for (size_t i = 1; i < intermediate_log_probs.size(); ++i)
    inter = add(inter, ctc_loss_clamped(intermediate_log_probs[i], target, clamp, nullptr, blank));
  return add(loss, scale(inter, intermediate_weight));
}

// Streaming greedy decoding: per-frame argmax, collapse repeats, drop
// blanks. The state carries the previous frame's argmax across chunk
// boundaries so a repeat spanning two chunks emits exactly once.
struct CollapseState {
  int last_argmax = 0;  // blank at stream start
};

template <typename S>
std::vector<int> greedy_decode_chunk(const Tensor<S>& frame_scores, CollapseState& state,
                                     int blank = 0) {
  std::vector<int> out;
  const int64_t frames = frame_scores.rows(), vocab = frame_scores.cols();
  for (int64_t t = 0; t < frames; ++t) {
    int arg = 0;
    S best = frame_scores.at(t, 0);
    for (int64_t v = 1; v < vocab; ++v)
      if (frame_scores.at(t, v) > best) {
        best = frame_scores.at(t, v);
        arg = static_cast<int>(v);
      }
    if (arg != blank && arg != state.last_argmax) out.push_back(arg);
    state.last_argmax = arg;
  }
  return out;
}

template <typename S>
std::vector<int> greedy_decode(const Tensor<S>& frame_scores, int blank = 0) {
  CollapseState st;
  return greedy_decode_chunk(frame_scores, st, blank);
}

}  // namespace streamg2p
