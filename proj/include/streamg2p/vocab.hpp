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
#include <string_view>
#include <vector>

#include "streamg2p/common.hpp"

namespace streamg2p {

// Closed grapheme vocabulary: 40 consonant+vowel syllables. Symbol ids are
// stable; files carry an FNV fingerprint so stale data cannot be mixed with
// a different vocabulary.
class GraphemeVocab {
 public:
  static const GraphemeVocab& instance();

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int id) const;
  int id(std::string_view name) const;  // throws InputError when unknown
  uint64_t fingerprint() const { return fingerprint_; }

 private:
  GraphemeVocab();
  std::vector<std::string> names_;
  uint64_t fingerprint_ = 0;
};

// Output label vocabulary: a reserved blank at index 0, the prosodic marks,
// and a 24-phoneme inventory. Targets never contain the blank.
class LabelVocab {
 public:
  static constexpr int kBlank = 0;
  static constexpr int kIp = 1;  // "#": intonation phrase boundary
  static constexpr int kAp = 2;  // "/": accent phrase boundary
  static constexpr int kAn = 3;  // "*": accent nucleus

  static const LabelVocab& instance();

  int size() const { return static_cast<int>(names_.size()); }
  int phoneme_begin() const { return 4; }
  int phoneme_count() const { return size() - phoneme_begin(); }
  const std::string& name(int id) const;
  int id(std::string_view name) const;  // throws InputError when unknown
  bool is_prosody(int id) const { return id == kIp || id == kAp || id == kAn; }
  uint64_t fingerprint() const { return fingerprint_; }

  // Rendering / parsing of space-separated label sequences.
  std::string render(const std::vector<int>& ids) const;
  std::vector<int> parse(std::string_view line) const;

 private:
  LabelVocab();
  std::vector<std::string> names_;
  uint64_t fingerprint_ = 0;
};

}  // namespace streamg2p
