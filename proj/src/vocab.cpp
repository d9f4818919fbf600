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

#include "streamg2p/vocab.hpp"

#include <sstream>

#include "streamg2p/rng.hpp"

namespace streamg2p {

namespace {

uint64_t fingerprint_names(const std::vector<std::string>& names) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& n : names) {
    h = fnv1a64(n, h);
    h = fnv1a64("|", h);
  }
  return h;
}

}  // namespace

GraphemeVocab::GraphemeVocab() {
  static const char* kConsonants = "kstnhmyr";
  static const char* kVowels = "aiueo";
  for (int c = 0; c < 8; ++c)
    for (int v = 0; v < 5; ++v)
      names_.push_back(std::string(1, kConsonants[c]) + kVowels[v]);
  fingerprint_ = fingerprint_names(names_);
}

const GraphemeVocab& GraphemeVocab::instance() {
  static GraphemeVocab v;
  return v;
}

const std::string& GraphemeVocab::name(int id) const {
  if (id < 0 || id >= size()) throw InputError("grapheme id out of range: " + std::to_string(id));
  return names_[static_cast<size_t>(id)];
}

int GraphemeVocab::id(std::string_view name) const {
  for (int i = 0; i < size(); ++i)
    if (names_[static_cast<size_t>(i)] == name) return i;
  throw InputError("unknown grapheme: " + std::string(name));
}

LabelVocab::LabelVocab() {
  names_ = {"_", "#", "/", "*"};
  // 24 phonemes: the five vowels plus nineteen consonants.
  static const char* kPhonemes[] = {"a", "e", "i", "o", "u", "p", "b", "t", "d", "k", "g", "f",
                                    "v", "s", "z", "m", "n", "l", "r", "w", "j", "h", "c", "x"};
  for (const char* p : kPhonemes) names_.push_back(p);
  fingerprint_ = fingerprint_names(names_);
}

const LabelVocab& LabelVocab::instance() {
  static LabelVocab v;
  return v;
}

const std::string& LabelVocab::name(int id) const {
  if (id < 0 || id >= size()) throw InputError("label id out of range: " + std::to_string(id));
  return names_[static_cast<size_t>(id)];
}

int LabelVocab::id(std::string_view name) const {
  for (int i = 0; i < size(); ++i)
    if (names_[static_cast<size_t>(i)] == name) return i;
  throw InputError("unknown label symbol: " + std::string(name));
}

std::string LabelVocab::render(const std::vector<int>& ids) const {
  std::ostringstream os;
  for (size_t i = 0; i < ids.size(); ++i) os << (i ? " " : "") << name(ids[i]);
  return os.str();
}

std::vector<int> LabelVocab::parse(std::string_view line) const {
  std::vector<int> out;
  std::istringstream is{std::string(line)};
  std::string tok;
  while (is >> tok) out.push_back(id(tok));
  return out;
}

}  // namespace streamg2p
