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

#include "streamg2p/metrics.hpp"

#include <algorithm>
#include <sstream>

namespace streamg2p {

int edit_distance(std::span<const int> a, std::span<const int> b) {
  const size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

std::vector<int> apply_view(std::span<const int> seq, View view) {
  std::vector<int> out;
  out.reserve(seq.size());
  for (int s : seq) {
    switch (view) {
      case View::kPnp:
        out.push_back(s);
        break;
      case View::kNormPnp:
        out.push_back(s == LabelVocab::kIp ? LabelVocab::kAp : s);
        break;
      case View::kPhoneme:
        if (s != LabelVocab::kIp && s != LabelVocab::kAp && s != LabelVocab::kAn)
          out.push_back(s);
        break;
    }
  }
  return out;
}

ViewScore score(const std::vector<std::vector<int>>& hyps,
                const std::vector<std::vector<int>>& refs, View view) {
  if (hyps.size() != refs.size())
    throw InputError("score: hypothesis/reference count mismatch (" +
                     std::to_string(hyps.size()) + " vs " + std::to_string(refs.size()) + ")");
  ViewScore s;
  s.sentences = static_cast<int>(hyps.size());
  for (size_t i = 0; i < hyps.size(); ++i) {
    std::vector<int> h = apply_view(hyps[i], view);
    std::vector<int> r = apply_view(refs[i], view);
    int d = edit_distance(h, r);
    s.total_distance += d;
    s.total_ref_len += static_cast<long long>(r.size());
    if (d > 0) ++s.sentences_with_errors;
  }
  s.cer = s.total_ref_len > 0
              ? 100.0 * static_cast<double>(s.total_distance) / static_cast<double>(s.total_ref_len)
              : 0.0;
  s.ser = s.sentences > 0
              ? 100.0 * static_cast<double>(s.sentences_with_errors) / static_cast<double>(s.sentences)
              : 0.0;
  return s;
}

EvalReport evaluate(const std::vector<std::vector<int>>& hyps,
                    const std::vector<std::vector<int>>& refs) {
  EvalReport rep;
  rep.pnp = score(hyps, refs, View::kPnp);
  rep.norm_pnp = score(hyps, refs, View::kNormPnp);
  rep.phoneme = score(hyps, refs, View::kPhoneme);
  return rep;
}

std::string format_report(const EvalReport& rep, const std::string& config_name) {
  std::ostringstream os;
  char buf[256];
  os << "config          PnP            Norm. PnP      Phoneme\n";
  std::snprintf(buf, sizeof(buf), "%-15s %.2f (%.1f)    %.2f (%.1f)    %.2f (%.1f)\n",
                config_name.c_str(), rep.pnp.cer, rep.pnp.ser, rep.norm_pnp.cer,
                rep.norm_pnp.ser, rep.phoneme.cer, rep.phoneme.ser);
  os << buf;
  std::snprintf(buf, sizeof(buf),
                "config=%s cer_pnp=%.4f ser_pnp=%.4f cer_norm_pnp=%.4f ser_norm_pnp=%.4f "
                "cer_phoneme=%.4f ser_phoneme=%.4f sentences=%d\n",
                config_name.c_str(), rep.pnp.cer, rep.pnp.ser, rep.norm_pnp.cer,
                rep.norm_pnp.ser, rep.phoneme.cer, rep.phoneme.ser, rep.pnp.sentences);
  os << buf;
  return os.str();
}

double BoundaryProfile::rate(int offset) const {
  return ref_symbols[static_cast<size_t>(offset)] > 0
             ? static_cast<double>(errors[static_cast<size_t>(offset)]) /
                   static_cast<double>(ref_symbols[static_cast<size_t>(offset)])
             : 0.0;
}

double BoundaryProfile::ambiguous_rate(int offset) const {
  return ref_symbols_amb[static_cast<size_t>(offset)] > 0
             ? static_cast<double>(errors_amb[static_cast<size_t>(offset)]) /
                   static_cast<double>(ref_symbols_amb[static_cast<size_t>(offset)])
             : 0.0;
}

namespace {

// Edit script between hyp and ref: per reference position, the number of
// substitution/deletion errors landing on it; insertions charge the
// reference position to their left (position 0 at the start).
std::vector<int> ref_position_errors(std::span<const int> hyp, std::span<const int> ref) {
  const size_t n = hyp.size(), m = ref.size();
  std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
  for (size_t j = 0; j <= m; ++j) dp[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    dp[i][0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      int sub = dp[i - 1][j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      dp[i][j] = std::min({sub, dp[i - 1][j] + 1, dp[i][j - 1] + 1});
    }
  }
  std::vector<int> errors(std::max<size_t>(m, 1), 0);
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && dp[i][j] == dp[i - 1][j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1)) {
      if (hyp[i - 1] != ref[j - 1]) ++errors[j - 1];  // substitution at ref j-1
      --i;
      --j;
    } else if (j > 0 && dp[i][j] == dp[i][j - 1] + 1) {
      ++errors[j - 1];  // deletion: ref j-1 missing from hyp
      --j;
    } else {
      ++errors[j > 0 ? j - 1 : 0];  // insertion: charge position to the left
      --i;
    }
  }
  return errors;
}

}  // namespace

BoundaryProfile boundary_error_profile(const std::vector<std::vector<int>>& hyps,
                                       const std::vector<std::vector<int>>& token_seqs,
                                       const SyntheticRules& rules, int chunk_tokens) {
  if (hyps.size() != token_seqs.size())
    throw InputError("boundary_error_profile: hypothesis/sentence count mismatch");
  if (chunk_tokens < 1) throw ConfigError("boundary_error_profile: chunk_tokens must be >= 1");
  BoundaryProfile p;
  p.chunk_tokens = chunk_tokens;
  p.ref_symbols.assign(static_cast<size_t>(chunk_tokens), 0);
  p.errors.assign(static_cast<size_t>(chunk_tokens), 0);
  p.ref_symbols_amb.assign(static_cast<size_t>(chunk_tokens), 0);
  p.errors_amb.assign(static_cast<size_t>(chunk_tokens), 0);

  for (size_t si = 0; si < hyps.size(); ++si) {
    OracleAlignment al = oracle_g2pnp_aligned(rules, token_seqs[si]);
    if (al.labels.empty()) continue;
    std::vector<int> per_ref = ref_position_errors(hyps[si], al.labels);
    for (size_t ti = 0; ti < token_seqs[si].size(); ++ti) {
      auto [b, e] = al.token_span[ti];
      int offset = static_cast<int>(ti % static_cast<size_t>(chunk_tokens));
      bool amb = rules.ambiguous[static_cast<size_t>(token_seqs[si][ti])] != 0;
      for (int j = b; j < e; ++j) {
        ++p.ref_symbols[static_cast<size_t>(offset)];
        p.errors[static_cast<size_t>(offset)] += per_ref[static_cast<size_t>(j)];
        if (amb) {
          ++p.ref_symbols_amb[static_cast<size_t>(offset)];
          p.errors_amb[static_cast<size_t>(offset)] += per_ref[static_cast<size_t>(j)];
        }
      }
    }
  }
  return p;
}

std::string format_profile(const BoundaryProfile& p) {
  std::ostringstream os;
  os << "offset\tref_symbols\terrors\trate\tref_symbols_ambiguous\terrors_ambiguous\trate_ambiguous\n";
  for (int o = 0; o < p.chunk_tokens; ++o) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d\t%lld\t%lld\t%.4f\t%lld\t%lld\t%.4f\n", o,
                  p.ref_symbols[static_cast<size_t>(o)], p.errors[static_cast<size_t>(o)],
                  p.rate(o), p.ref_symbols_amb[static_cast<size_t>(o)],
                  p.errors_amb[static_cast<size_t>(o)], p.ambiguous_rate(o));
    os << buf;
  }
  return os.str();
}

}  // namespace streamg2p
