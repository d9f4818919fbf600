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

#include <span>
#include <string>
#include <vector>

#include "streamg2p/corpus.hpp"

namespace streamg2p {

// Unit-cost Levenshtein distance over label-id sequences. The "character"
// unit is one vocabulary symbol (phoneme or prosodic mark).
int edit_distance(std::span<const int> a, std::span<const int> b);

// Scoring views. Transforms are applied to hypothesis and reference alike:
//   kPnp     : identity
//   kNormPnp : "#" mapped to "/" (boundary types treated as identical)
//   kPhoneme : all prosodic marks removed
enum class View { kPnp, kNormPnp, kPhoneme };

std::vector<int> apply_view(std::span<const int> seq, View view);

struct ViewScore {
  double cer = 0.0;   // 100 * sum(distance) / sum(ref length), post-transform
  double ser = 0.0;   // % of sentences with nonzero distance
  long long total_distance = 0;
  long long total_ref_len = 0;
  int sentences = 0;
  int sentences_with_errors = 0;
};

// Throws InputError when the corpora differ in sentence count.
ViewScore score(const std::vector<std::vector<int>>& hyps,
                const std::vector<std::vector<int>>& refs, View view);

struct EvalReport {
  ViewScore pnp, norm_pnp, phoneme;
};
EvalReport evaluate(const std::vector<std::vector<int>>& hyps,
                    const std::vector<std::vector<int>>& refs);

// Human-readable report plus a machine-readable key=value block.
std::string format_report(const EvalReport& rep, const std::string& config_name);

// Per within-chunk-offset error attribution.
//
// Reference label positions are attributed to tokens via the corpus oracle's
// alignment; hypothesis errors are mapped to reference positions through the
// edit script (insertions charge the preceding reference position). Rates
// are symbol-level: errors at offset / reference symbols at offset.
struct BoundaryProfile {
  int chunk_tokens = 0;
  std::vector<long long> ref_symbols;       // per offset 0..C-1
  std::vector<long long> errors;            // per offset
  std::vector<long long> ref_symbols_amb;   // restricted to ambiguous tokens
  std::vector<long long> errors_amb;

  double rate(int offset) const;
  double ambiguous_rate(int offset) const;
};

BoundaryProfile boundary_error_profile(const std::vector<std::vector<int>>& hyps,
                                       const std::vector<std::vector<int>>& token_seqs,
                                       const SyntheticRules& rules, int chunk_tokens);

std::string format_profile(const BoundaryProfile& p);

}  // namespace streamg2p
