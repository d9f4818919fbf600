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

#include "streamg2p/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "streamg2p/rng.hpp"

namespace streamg2p {

namespace {

constexpr uint64_t kVariantTag = 0x616d626967756f75ull;   // ambiguity hash domain
constexpr uint64_t kNucleusTag = 0x6e75636c65757321ull;   // nucleus hash domain
constexpr int kEosSentinel = 40;                          // right-context past the end
constexpr int kClausePeriod = 3;  // every 3rd phrase boundary is an intonation break
constexpr int kContentCount = SyntheticRules::kFirstMarker;

std::vector<int> draw_pron(Rng& rng, int min_len = 1, int max_len = 3) {
  const LabelVocab& lv = LabelVocab::instance();
  int len = static_cast<int>(rng.uniform_int(min_len, max_len));
  std::vector<int> out;
  out.reserve(static_cast<size_t>(len));
  for (int i = 0; i < len; ++i)
    out.push_back(static_cast<int>(rng.uniform_int(lv.phoneme_begin(), lv.size() - 1)));
  return out;
}

}  // namespace

int SyntheticRules::variant_bucket(int grapheme, const int* next, int next_count) const {
  uint64_t h = rules_seed ^ kVariantTag;
  h = hash_combine(h, static_cast<uint64_t>(grapheme));
  for (int i = 0; i < radius; ++i) {
    int id = i < next_count ? next[i] : kEosSentinel;
    h = hash_combine(h, static_cast<uint64_t>(id));
  }
  return static_cast<int>(h % static_cast<uint64_t>(n_variants));
}

int SyntheticRules::nucleus_index(int phrase_first_grapheme) const {
  uint64_t h = hash_combine(rules_seed ^ kNucleusTag, static_cast<uint64_t>(phrase_first_grapheme));
  return 1 + static_cast<int>(h % 3);
}

const std::vector<int>& SyntheticRules::pronounce(const std::vector<int>& graphemes,
                                                  size_t i) const {
  int g = graphemes[i];
  if (g < 0 || g >= static_cast<int>(base_pron.size()))
    throw InputError("grapheme id out of vocabulary: " + std::to_string(g));
  if (!ambiguous[static_cast<size_t>(g)]) return base_pron[static_cast<size_t>(g)];
  int avail = static_cast<int>(graphemes.size() - i - 1);
  const int* next = avail > 0 ? graphemes.data() + i + 1 : nullptr;
  int b = variant_bucket(g, next, avail);
  return variants[static_cast<size_t>(g)][static_cast<size_t>(b)];
}

SyntheticRules make_rules(uint64_t rules_seed, int radius) {
  if (radius < 1) throw ConfigError("rules radius must be >= 1");
  SyntheticRules r;
  r.rules_seed = rules_seed;
  r.radius = radius;
  Rng rng = Rng(rules_seed).stream("rules");

  const int vocab = GraphemeVocab::instance().size();
  r.base_pron.resize(static_cast<size_t>(vocab));
  for (auto& p : r.base_pron) p = draw_pron(rng);

  // Ambiguous set: drawn from the content graphemes only; markers keep a
  // fixed pronunciation so prosody cues stay unambiguous.
  std::vector<int> content(kContentCount);
  std::iota(content.begin(), content.end(), 0);
  rng.shuffle(content.begin(), content.end());
  r.ambiguous.assign(static_cast<size_t>(vocab), 0);
  for (int i = 0; i < r.ambiguous_count; ++i) r.ambiguous[static_cast<size_t>(content[i])] = 1;

  r.variants.resize(static_cast<size_t>(vocab));
  for (int g = 0; g < vocab; ++g) {
    if (!r.ambiguous[static_cast<size_t>(g)]) continue;
    auto& vs = r.variants[static_cast<size_t>(g)];
    vs.push_back(r.base_pron[static_cast<size_t>(g)]);
    while (static_cast<int>(vs.size()) < r.n_variants) {
      std::vector<int> cand = draw_pron(rng);
      if (std::find(vs.begin(), vs.end(), cand) == vs.end()) vs.push_back(cand);
    }
  }
  return r;
}

OracleAlignment oracle_g2pnp_aligned(const SyntheticRules& rules,
                                     const std::vector<int>& graphemes) {
  OracleAlignment out;
  const size_t n = graphemes.size();
  out.token_span.assign(n, {0, 0});
  if (n == 0) return out;

  // Phrase extents: a phrase starts at token 0 and at every marker.
  std::vector<size_t> starts;
  for (size_t i = 0; i < n; ++i)
    if (i == 0 || rules.is_marker(graphemes[i])) starts.push_back(i);

  for (size_t pi = 0; pi < starts.size(); ++pi) {
    size_t s = starts[pi];
    size_t e = pi + 1 < starts.size() ? starts[pi + 1] : n;

    int boundary = rules.is_marker(graphemes[s]) && rules.is_hash_marker(graphemes[s])
                       ? LabelVocab::kIp
                       : LabelVocab::kAp;

    int total_phonemes = 0;
    for (size_t i = s; i < e; ++i)
      total_phonemes += static_cast<int>(rules.pronounce(graphemes, i).size());
    int k = std::min(rules.nucleus_index(graphemes[s]), total_phonemes);

    int count = 0;
    for (size_t i = s; i < e; ++i) {
      int begin = static_cast<int>(out.labels.size());
      if (i == s) out.labels.push_back(boundary);
      for (int ph : rules.pronounce(graphemes, i)) {
        out.labels.push_back(ph);
        if (++count == k) out.labels.push_back(LabelVocab::kAn);
      }
      out.token_span[i] = {begin, static_cast<int>(out.labels.size())};
    }
  }
  return out;
}

std::vector<int> oracle_g2pnp(const SyntheticRules& rules, const std::vector<int>& graphemes) {
  return oracle_g2pnp_aligned(rules, graphemes).labels;
}

Dataset generate(const SyntheticRules& rules, uint64_t data_seed, int n_sentences, int len_min,
                 int len_max) {
  if (len_min < 4 || len_max > 128 || len_min > len_max)
    throw ConfigError("sentence length range must lie within [4, 128]");
  if (n_sentences < 0) throw ConfigError("n_sentences must be >= 0");

  Dataset ds;
  ds.header.rules_seed = rules.rules_seed;
  ds.header.radius = rules.radius;
  ds.header.data_seed = data_seed;
  ds.header.len_min = len_min;
  ds.header.len_max = len_max;
  ds.header.grapheme_fingerprint = GraphemeVocab::instance().fingerprint();
  ds.header.label_fingerprint = LabelVocab::instance().fingerprint();

  Rng data_stream = Rng(data_seed).stream("data");
  ds.records.reserve(static_cast<size_t>(n_sentences));
  for (int si = 0; si < n_sentences; ++si) {
    Rng rng = data_stream.substream(static_cast<uint64_t>(si));
    int len = static_cast<int>(rng.uniform_int(len_min, len_max));
    Record rec;
    rec.tokens.reserve(static_cast<size_t>(len));
    int gap = static_cast<int>(rng.uniform_int(3, 6));
    int since_marker = 0;
    int marker_count = 0;
    for (int pos = 0; pos < len; ++pos) {
      if (pos > 0 && since_marker >= gap) {
        ++marker_count;
        bool hash_type = marker_count % kClausePeriod == 0;
        int base = hash_type ? SyntheticRules::kHashMarkerBegin : SyntheticRules::kFirstMarker;
        rec.tokens.push_back(base + static_cast<int>(rng.uniform_int(0, 1)));
        since_marker = 0;
        gap = static_cast<int>(rng.uniform_int(3, 6));
      } else {
        rec.tokens.push_back(static_cast<int>(rng.uniform_int(0, kContentCount - 1)));
        ++since_marker;
      }
    }
    rec.labels = oracle_g2pnp(rules, rec.tokens);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

double ambiguous_position_rate(const SyntheticRules& rules, const Dataset& ds) {
  int64_t total = 0, ambig = 0;
  for (const auto& rec : ds.records)
    for (int g : rec.tokens) {
      ++total;
      if (rules.ambiguous[static_cast<size_t>(g)]) ++ambig;
    }
  return total == 0 ? 0.0 : static_cast<double>(ambig) / static_cast<double>(total);
}

namespace {

uint64_t parse_hex(const std::string& s) {
  return std::stoull(s, nullptr, 16);
}

std::string hex(uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

}  // namespace

void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot open for writing: " + path);
  const auto& gv = GraphemeVocab::instance();
  const auto& lv = LabelVocab::instance();
  os << "streamg2p-dataset v" << ds.header.version << "\n";
  os << "rules_seed=" << ds.header.rules_seed << "\n";
  os << "radius=" << ds.header.radius << "\n";
  os << "data_seed=" << ds.header.data_seed << "\n";
  os << "len_min=" << ds.header.len_min << "\n";
  os << "len_max=" << ds.header.len_max << "\n";
  os << "graphemes=" << hex(ds.header.grapheme_fingerprint) << "\n";
  os << "labels=" << hex(ds.header.label_fingerprint) << "\n";
  os << "count=" << ds.records.size() << "\n";
  os << "\n";
  for (const auto& rec : ds.records) {
    for (size_t i = 0; i < rec.tokens.size(); ++i) os << (i ? " " : "") << gv.name(rec.tokens[i]);
    os << "\t";
    for (size_t i = 0; i < rec.labels.size(); ++i) os << (i ? " " : "") << lv.name(rec.labels[i]);
    os << "\n";
  }
  if (!os) throw InputError("write failed: " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open dataset: " + path);
  Dataset ds;
  std::string line;
  if (!std::getline(is, line) || line.rfind("streamg2p-dataset v", 0) != 0)
    throw InputError("not a streamg2p dataset: " + path);
  ds.header.version = static_cast<uint32_t>(std::stoul(line.substr(19)));
  if (ds.header.version != 1)
    throw InputError("unsupported dataset version: " + std::to_string(ds.header.version));

  size_t expected = 0;
  while (std::getline(is, line) && !line.empty()) {
    auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError("malformed header line: " + line);
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "rules_seed") ds.header.rules_seed = std::stoull(val);
    else if (key == "radius") ds.header.radius = std::stoi(val);
    else if (key == "data_seed") ds.header.data_seed = std::stoull(val);
    else if (key == "len_min") ds.header.len_min = std::stoi(val);
    else if (key == "len_max") ds.header.len_max = std::stoi(val);
    else if (key == "graphemes") ds.header.grapheme_fingerprint = parse_hex(val);
    else if (key == "labels") ds.header.label_fingerprint = parse_hex(val);
    else if (key == "count") expected = std::stoull(val);
    else throw InputError("unknown dataset header key: " + key);
  }
  const auto& gv = GraphemeVocab::instance();
  const auto& lv = LabelVocab::instance();
  if (ds.header.grapheme_fingerprint != gv.fingerprint() ||
      ds.header.label_fingerprint != lv.fingerprint())
    throw InputError("dataset vocabulary fingerprint mismatch: " + path);

  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw InputError("malformed record (missing tab): " + line);
    Record rec;
    {
      std::istringstream ts(line.substr(0, tab));
      std::string tok;
      while (ts >> tok) rec.tokens.push_back(gv.id(tok));
    }
    rec.labels = lv.parse(line.substr(tab + 1));
    for (int l : rec.labels)
      if (l == LabelVocab::kBlank) throw InputError("blank symbol in target sequence");
    ds.records.push_back(std::move(rec));
  }
  if (ds.records.size() != expected)
    throw InputError("dataset record count mismatch: header says " + std::to_string(expected) +
                     ", file has " + std::to_string(ds.records.size()));
  return ds;
}

}  // namespace streamg2p
