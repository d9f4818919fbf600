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

#include "streamg2p/vocab.hpp"

namespace streamg2p {

// Synthetic grapheme-to-phoneme-and-prosody language.
//
// Each grapheme carries a base pronunciation of 1-3 phonemes. A designated
// subset is ambiguous: its pronunciation is selected by the next `radius`
// graphemes, via a keyed hash over the right context, so the correct output
// at an ambiguous position is unknowable without that much look-ahead.
//
// Prosody is driven by marker graphemes (the last four ids). A marker opens
// a new accent phrase; two of them stand for "/" phrases and two for "#"
// (intonation) phrases. The accent nucleus "*" lands after the k-th phoneme
// of each phrase, k keyed off the phrase-initial grapheme. The oracle is a
// pure function of (rules, sentence): labels can always be recomputed from
// the graphemes alone.
struct SyntheticRules {
  uint64_t rules_seed = 7;
  int radius = 1;        // right-context radius resolving ambiguity
  int n_variants = 2;    // pronunciations per ambiguous grapheme
  int ambiguous_count = 12;

  std::vector<std::vector<int>> base_pron;              // [40] -> phoneme label ids
  std::vector<uint8_t> ambiguous;                       // [40]
  std::vector<std::vector<std::vector<int>>> variants;  // [40][n_variants]

  static constexpr int kFirstMarker = 36;  // ids 36..39 are markers
  static constexpr int kHashMarkerBegin = 38;  // 38..39 open "#" phrases

  bool is_marker(int g) const { return g >= kFirstMarker; }
  bool is_hash_marker(int g) const { return g >= kHashMarkerBegin; }

  // Variant selected by the right context (the `radius` following grapheme
  // ids; positions past the end use the end-of-sentence sentinel).
  int variant_bucket(int grapheme, const int* next, int next_count) const;

  // Nucleus position (1-based phoneme index) for a phrase starting with the
  // given grapheme; clamped by the caller to the phrase's phoneme count.
  int nucleus_index(int phrase_first_grapheme) const;

  // Pronunciation of graphemes[i] within the sentence.
  const std::vector<int>& pronounce(const std::vector<int>& graphemes, size_t i) const;
};

SyntheticRules make_rules(uint64_t rules_seed, int radius = 1);

// Deterministic ground-truth map: sentence -> mixed phoneme/prosody labels.
std::vector<int> oracle_g2pnp(const SyntheticRules& rules, const std::vector<int>& graphemes);

// Oracle plus per-token attribution: token_span[i] = [begin, end) range of
// label positions produced by token i (its phonemes, plus any boundary or
// nucleus mark it triggered). Used for chunk-offset error attribution.
struct OracleAlignment {
  std::vector<int> labels;
  std::vector<std::pair<int, int>> token_span;
};
OracleAlignment oracle_g2pnp_aligned(const SyntheticRules& rules,
                                     const std::vector<int>& graphemes);

struct Record {
  std::vector<int> tokens;  // grapheme ids
  std::vector<int> labels;  // label ids (no blank)
};

struct DatasetHeader {
  uint32_t version = 1;
  uint64_t rules_seed = 7;
  int radius = 1;
  uint64_t data_seed = 0;
  int len_min = 4;
  int len_max = 16;
  uint64_t grapheme_fingerprint = 0;
  uint64_t label_fingerprint = 0;
};

struct Dataset {
  DatasetHeader header;
  std::vector<Record> records;
};

// Seeded sentence generation. Sentences are length-uniform in
// [len_min, len_max]; each is drawn from its own derived generator, so the
// result is independent of generation order. Throws ConfigError for length
// ranges outside [4, 128].
Dataset generate(const SyntheticRules& rules, uint64_t data_seed, int n_sentences, int len_min,
                 int len_max);

// Text container; round-trips losslessly. Readers validate the vocabulary
// fingerprints and the format version.
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

// Fraction of token positions holding an ambiguous grapheme.
double ambiguous_position_rate(const SyntheticRules& rules, const Dataset& ds);

}  // namespace streamg2p
