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
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "streamg2p/checkpoint.hpp"
#include "streamg2p/corpus.hpp"
#include "streamg2p/ctc.hpp"
#include "streamg2p/encoder.hpp"
#include "streamg2p/metrics.hpp"

namespace streamg2p {

// Frame masks depend only on the token count; memoize per length.
class MaskCache {
 public:
  explicit MaskCache(const StreamingConfig& cfg) : cfg_(cfg) {}
  const std::vector<LayerMask>& get(int64_t n_tokens) {
    auto it = cache_.find(n_tokens);
    if (it == cache_.end())
      it = cache_.emplace(n_tokens, build_frame_masks(n_tokens, cfg_)).first;
    return it->second;
  }

 private:
  StreamingConfig cfg_;
  std::map<int64_t, std::vector<LayerMask>> cache_;
};

// Greedy offline decode of a dataset (hypotheses as label-id sequences).
template <typename S>
std::vector<std::vector<int>> decode_dataset(ModelParams<S>& model, const Dataset& ds,
                                             size_t limit = 0) {
  MaskCache masks(model.cfg);
  std::vector<std::vector<int>> hyps;
  size_t n = limit == 0 ? ds.records.size() : std::min(limit, ds.records.size());
  hyps.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const auto& rec = ds.records[i];
    Tape<S> tape(/*recording=*/false);
    auto out = encoder_forward(tape, model, rec.tokens,
                               masks.get(static_cast<int64_t>(rec.tokens.size())));
    hyps.push_back(greedy_decode(out.final_logits.value()));
  }
  return hyps;
}

// Adam with warmup followed by exponential decay between the configured
// learning-rate endpoints.
template <typename S>
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Param<S>*> params, double beta1 = 0.9, double beta2 = 0.98,
                double eps = 1e-9)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (Param<S>* p : params_) {
      m_.emplace_back(p->value.shape);
      v_.emplace_back(p->value.shape);
    }
  }

  void step(double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params_.size(); ++i) {
      Param<S>& p = *params_[i];
      for (size_t j = 0; j < p.value.data.size(); ++j) {
        double g = static_cast<double>(p.grad.data[j]);
        double m = beta1_ * static_cast<double>(m_[i].data[j]) + (1 - beta1_) * g;
        double v = beta2_ * static_cast<double>(v_[i].data[j]) + (1 - beta2_) * g * g;
        m_[i].data[j] = static_cast<S>(m);
        v_[i].data[j] = static_cast<S>(v);
        p.value.data[j] -=
            static_cast<S>(lr * (m / bc1) / (std::sqrt(v / bc2) + eps_));
      }
    }
  }

 private:
  std::vector<Param<S>*> params_;
  std::vector<Tensor<S>> m_, v_;
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

inline double lr_at(const RunConfig& cfg, int step /*1-based*/) {
  if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps)
    return cfg.lr_start * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  int total = std::max(1, cfg.steps - cfg.warmup_steps);
  int done = std::min(std::max(0, step - cfg.warmup_steps), total);
  return cfg.lr_start *
         std::pow(cfg.lr_end / cfg.lr_start, static_cast<double>(done) / static_cast<double>(total));
}

struct TrainResult {
  std::string checkpoint_path;
  double final_valid_cer = -1.0;
  double final_valid_ser = -1.0;
  int clamped_total = 0;
  std::vector<double> loss_history;                    // per step
  std::vector<std::pair<int, double>> valid_history;   // (step, PnP CER)
};

// Single-threaded training loop: deterministic given (config, datasets).
template <typename S>
class Trainer {
 public:
  Trainer(const RunConfig& cfg, Dataset train_set, Dataset valid_set)
      : cfg_(cfg), train_(std::move(train_set)), valid_(std::move(valid_set)),
        masks_(cfg.model) {
    cfg_.validate();
    if (train_.records.empty()) throw InputError("training set is empty");
    model_.cfg = cfg_.model;
    model_.init(Rng(cfg_.seed));
  }

  ModelParams<S>& model() { return model_; }

  TrainResult run(std::ostream& log) {
    TrainResult result;
    AdamOptimizer<S> opt(model_.all_params());
    Rng order_rng = Rng(cfg_.seed).stream("batch_order");
    Rng dropout_rng = Rng(cfg_.seed).stream("dropout");

    std::vector<size_t> order(train_.records.size());
    std::iota(order.begin(), order.end(), 0);
    size_t cursor = order.size();  // forces a shuffle on first use

    for (int step = 1; step <= cfg_.steps; ++step) {
      // Token-count-based dynamic batch: consecutive shuffled sentences
      // until the frame cap is reached (always at least one).
      std::vector<const Record*> batch;
      int64_t frames = 0;
      while (true) {
        if (cursor >= order.size()) {
          order_rng.shuffle(order.begin(), order.end());
          cursor = 0;
        }
        const Record& rec = train_.records[order[cursor]];
        int64_t rec_frames = static_cast<int64_t>(rec.tokens.size()) * cfg_.model.upsample;
        if (!batch.empty() && frames + rec_frames > cfg_.batch_frames) break;
        batch.push_back(&rec);
        frames += rec_frames;
        ++cursor;
        if (frames >= cfg_.batch_frames) break;
      }

      Tape<S> tape;
      Val<S> loss;
      int clamped = 0;
      for (const Record* rec : batch) {
        auto out = encoder_forward(tape, model_, rec->tokens,
                                   masks_.get(static_cast<int64_t>(rec->tokens.size())),
                                   /*train=*/true, &dropout_rng);
        std::vector<Val<S>> inter;
        inter.reserve(out.intermediate_logits.size());
        for (auto& [layer, logits] : out.intermediate_logits)
          inter.push_back(log_softmax(logits));
        Val<S> l = total_ctc_loss(log_softmax(out.final_logits), inter, rec->labels,
                                  static_cast<S>(cfg_.model.intermediate_weight),
                                  static_cast<S>(cfg_.infeasible_clamp), &clamped);
        loss = loss.valid() ? add(loss, l) : l;
      }
      loss = scale(loss, static_cast<S>(1.0 / static_cast<double>(batch.size())));
      double loss_value = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(loss_value))
        throw TrainError("non-finite loss at step " + std::to_string(step) +
                         " (batch of " + std::to_string(batch.size()) + ")");
      result.loss_history.push_back(loss_value);
      result.clamped_total += clamped;

      model_.zero_grad();
      tape.backward(loss);
      double lr = lr_at(cfg_, step);
      opt.step(lr);

      if (cfg_.log_interval > 0 && step % cfg_.log_interval == 0) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "step=%d loss=%.4f lr=%.3e batch=%zu clamped=%d\n",
                      step, loss_value, lr, batch.size(), clamped);
        log << buf << std::flush;
      }
      if (cfg_.val_interval > 0 && step % cfg_.val_interval == 0 && !valid_.records.empty()) {
        auto [cer, ser] = validate(static_cast<size_t>(cfg_.val_subset));
        char buf[160];
        std::snprintf(buf, sizeof(buf), "step=%d valid_cer=%.3f valid_ser=%.3f\n", step, cer,
                      ser);
        log << buf << std::flush;
        result.valid_history.emplace_back(step, cer);
      }
    }

    if (!valid_.records.empty()) {
      auto [cer, ser] = validate(0);
      result.final_valid_cer = cer;
      result.final_valid_ser = ser;
      char buf[160];
      std::snprintf(buf, sizeof(buf), "final valid_cer=%.3f valid_ser=%.3f clamped_total=%d\n",
                    cer, ser, result.clamped_total);
      log << buf << std::flush;
    }

    std::filesystem::create_directories(cfg_.out_dir);
    result.checkpoint_path = cfg_.out_dir + "/checkpoint.bin";
    save_checkpoint(result.checkpoint_path, model_, cfg_);
    return result;
  }

  // (PnP CER, PnP SER) over the first `limit` validation sentences (0 = all).
  std::pair<double, double> validate(size_t limit) {
    auto hyps = decode_dataset(model_, valid_, limit);
    std::vector<std::vector<int>> refs;
    for (size_t i = 0; i < hyps.size(); ++i) refs.push_back(valid_.records[i].labels);
    ViewScore s = score(hyps, refs, View::kPnp);
    return {s.cer, s.ser};
  }

 private:
  RunConfig cfg_;
  Dataset train_, valid_;
  MaskCache masks_;
  ModelParams<S> model_;
};

}  // namespace streamg2p
