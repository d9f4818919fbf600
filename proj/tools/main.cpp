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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "streamg2p/checkpoint.hpp"
#include "streamg2p/engine.hpp"
#include "streamg2p/train.hpp"

namespace sg = streamg2p;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string out_dir = "out";
};

sg::RunConfig make_run_config(const GlobalArgs& g) {
  sg::RunConfig cfg;
  if (!g.config_path.empty()) cfg = sg::load_config_file(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  cfg.out_dir = g.out_dir;
  return cfg;
}

int run_gen_data(const GlobalArgs& g, uint64_t rules_seed, int n, int radius, int len_min,
                 int len_max, std::string file) {
  sg::RunConfig cfg = make_run_config(g);
  if (file.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    file = cfg.out_dir + "/dataset.txt";
  }
  auto rules = sg::make_rules(rules_seed, radius);
  sg::Dataset ds = sg::generate(rules, cfg.seed, n, len_min, len_max);
  sg::write_dataset(file, ds);
  double amb = sg::ambiguous_position_rate(rules, ds);
  std::cout << "wrote=" << file << " sentences=" << n << " rules_seed=" << rules_seed
            << " data_seed=" << cfg.seed << " radius=" << radius << " ambiguous_rate=" << amb
            << "\n";
  return 0;
}

template <typename S>
int run_train_typed(sg::RunConfig cfg) {
  if (cfg.train_data.empty()) throw sg::ConfigError("train: no train_data configured");
  if (cfg.valid_data.empty()) throw sg::ConfigError("train: no valid_data configured");
  sg::Dataset train_set = sg::read_dataset(cfg.train_data);
  sg::Dataset valid_set = sg::read_dataset(cfg.valid_data);
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream log_file(cfg.out_dir + "/train.log");
  struct Tee : std::ostream, std::streambuf {
    std::ostream &a, &b;
    Tee(std::ostream& a, std::ostream& b) : std::ostream(this), a(a), b(b) {}
    int overflow(int c) override {
      a.put(static_cast<char>(c));
      b.put(static_cast<char>(c));
      return c;
    }
  } tee(std::cout, log_file);

  tee << "config:\n" << cfg.serialize();
  sg::Trainer<S> trainer(cfg, std::move(train_set), std::move(valid_set));
  tee << "parameters=" << trainer.model().parameter_count() << "\n";
  auto result = trainer.run(tee);
  tee << "checkpoint=" << result.checkpoint_path << "\n";
  return 0;
}

int run_train(sg::RunConfig cfg) {
  if (cfg.precision == "f32") return run_train_typed<float>(std::move(cfg));
  return run_train_typed<double>(std::move(cfg));
}

std::vector<std::vector<int>> read_label_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw sg::InputError("cannot open label file: " + path);
  const auto& lv = sg::LabelVocab::instance();
  std::vector<std::vector<int>> out;
  std::string line;
  while (std::getline(is, line)) out.push_back(lv.parse(line));
  return out;
}

int run_eval(const std::string& ckpt, const std::string& data, const std::string& hyp_file,
             const std::string& ref_file, bool profile, const std::string& mask_override) {
  std::vector<std::vector<int>> hyps, refs;
  std::string config_name = "eval";
  std::optional<sg::Dataset> ds;
  std::optional<sg::SyntheticRules> rules;
  int chunk_tokens = 0;

  if (!hyp_file.empty() || !ref_file.empty()) {
    if (hyp_file.empty() || ref_file.empty())
      throw sg::ConfigError("eval: --hyp and --ref must be given together");
    hyps = read_label_file(hyp_file);
    refs = read_label_file(ref_file);
  } else {
    if (ckpt.empty() || data.empty())
      throw sg::ConfigError("eval: need either --hyp/--ref or --ckpt/--data");
    ds = sg::read_dataset(data);
    sg::RunConfig cfg;
    auto model = sg::load_checkpoint<float>(ckpt, &cfg);
    if (mask_override == "full") model.cfg.full_context = true;
    if (mask_override == "streaming") model.cfg.full_context = false;
    hyps = sg::decode_dataset(model, *ds);
    for (const auto& rec : ds->records) refs.push_back(rec.labels);
    rules = sg::make_rules(ds->header.rules_seed, ds->header.radius);
    chunk_tokens = model.cfg.chunk_tokens;
    char name[64];
    std::snprintf(name, sizeof(name), "%s-P%d-C%d-M%d", model.cfg.full_context ? "FC" : "CC",
                  model.cfg.past_tokens, model.cfg.chunk_tokens, model.cfg.mla_tokens);
    config_name = name;
  }

  auto report = sg::evaluate(hyps, refs);
  std::cout << sg::format_report(report, config_name);
  if (profile) {
    if (!ds || !rules) throw sg::ConfigError("eval: --profile requires --ckpt/--data mode");
    std::vector<std::vector<int>> token_seqs;
    for (const auto& rec : ds->records) token_seqs.push_back(rec.tokens);
    auto prof = sg::boundary_error_profile(hyps, token_seqs, *rules, chunk_tokens);
    std::cout << sg::format_profile(prof);
  }
  return 0;
}

int run_stream(const std::string& ckpt, bool binary, bool show_latency) {
  if (ckpt.empty()) throw sg::ConfigError("stream: --ckpt is required");
  auto model = sg::load_checkpoint<float>(ckpt);
  if (model.cfg.full_context)
    throw sg::ConfigError("stream: checkpoint was trained with full-context masks");
  sg::StreamingEngine<float> engine(model);
  const auto& gv = sg::GraphemeVocab::instance();
  const auto& lv = sg::LabelVocab::instance();

  auto emit = [&](const std::vector<sg::EmittedSymbol>& symbols) {
    for (const auto& s : symbols)
      std::cout << s.arrival_token_index << "\t" << lv.name(s.label) << "\n";
    std::cout.flush();
  };

  if (binary) {
    // length-prefixed framing: u32 (LE) byte count, then the grapheme name
    while (true) {
      uint32_t len = 0;
      if (!std::cin.read(reinterpret_cast<char*>(&len), 4)) break;
      std::string name(len, '\0');
      if (!std::cin.read(name.data(), len))
        throw sg::InputError("stream: truncated binary token");
      emit(engine.push_token(gv.id(name)));
    }
  } else {
    std::string line;
    while (std::getline(std::cin, line)) {
      if (line.empty()) continue;
      emit(engine.push_token(gv.id(line)));
    }
  }
  emit(engine.close());
  if (show_latency) {
    const auto& lat = engine.latency();
    std::cerr << "tokens_waited=" << lat.tokens_waited
              << " first_chunk_seconds=" << lat.first_chunk_seconds
              << " chunks=" << lat.chunk_compute_seconds.size() << "\n";
  }
  return 0;
}

int run_analyze_mask(sg::RunConfig cfg, int n_tokens, bool frames, int regular_w) {
  cfg.model.intermediate_layers.clear();  // irrelevant to mask topology
  cfg.model.validate();
  const sg::StreamingConfig& mc = cfg.model;
  std::cout << "# chunk-aware attention masks: C=" << mc.chunk_tokens << " P=" << mc.past_tokens
            << " M=" << mc.mla_tokens << " L=" << mc.layers << " tokens=" << n_tokens << "\n";
  auto render_layer = [&](int layer) {
    sg::LayerMask mask = sg::build_token_mask(n_tokens, mc, layer);
    if (frames) mask = sg::expand_to_frames(mask, mc.upsample);
    std::cout << "layer " << layer << (layer == 1 && mc.mla_tokens > 0 ? " (with MLA window)" : "")
              << ":\n"
              << sg::render_mask(mask);
  };
  render_layer(1);
  if (mc.layers > 1) render_layer(2);

  auto rep = sg::effective_lookahead(mc, n_tokens, sg::LookaheadMode::kChunkAware);
  std::cout << "# receptive field after " << mc.layers << " layers (chunk-aware)\n"
            << sg::receptive_field_table(rep, mc);
  auto reg = sg::effective_lookahead(mc, n_tokens, sg::LookaheadMode::kRegular, regular_w);
  int max_reg = 0;
  for (int v : reg.lookahead) max_reg = std::max(max_reg, v);
  std::cout << "# regular look-ahead baseline: w=" << regular_w << " per layer -> max "
            << max_reg << " tokens after " << mc.layers << " layers (grows with depth)\n";
  return 0;
}

int run_bench(const std::string& ckpt, sg::RunConfig cfg, double tau, int n_streams,
              int stream_len) {
  sg::ModelParams<float> model;
  if (!ckpt.empty()) {
    model = sg::load_checkpoint<float>(ckpt);
  } else {
    model.cfg = cfg.model;
    model.init(sg::Rng(cfg.seed));
  }
  if (model.cfg.full_context)
    throw sg::ConfigError("bench: requires a streaming mask configuration");
  if (tau < 0) throw sg::ConfigError("bench: tau must be >= 0");
  sg::Rng rng = sg::Rng(cfg.seed).stream("bench");
  double first_sum = 0, chunk_sum = 0;
  int64_t chunk_count = 0;
  int waited = 0;
  for (int i = 0; i < n_streams; ++i) {
    std::vector<int> tokens;
    for (int t = 0; t < stream_len; ++t)
      tokens.push_back(static_cast<int>(rng.uniform_int(0, 39)));
    auto rec = sg::bench_stream(model, tokens);
    first_sum += rec.first_chunk_seconds;
    waited = rec.tokens_waited;
    for (double s : rec.chunk_compute_seconds) {
      chunk_sum += s;
      ++chunk_count;
    }
  }
  double first_mean = first_sum / n_streams;
  double start = static_cast<double>(waited) * tau + first_mean;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "streams=%d len=%d tokens_waited=%d tau=%.4f mean_first_chunk_s=%.4f "
                "mean_chunk_s=%.4f start_model=%d*tau+%.4f start_s=%.4f\n",
                n_streams, stream_len, waited, tau, first_mean,
                chunk_sum / static_cast<double>(chunk_count), waited, first_mean, start);
  std::cout << buf;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streamg2p: streaming grapheme-to-phoneme-and-prosody conversion"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config_path, "key = value configuration file");
  uint64_t seed_opt = 0;
  auto* seed_flag = app.add_option("--seed", seed_opt, "global random seed");
  app.add_option("--out", g.out_dir, "output directory");

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  uint64_t rules_seed = 7;
  int gen_n = 1000, radius = 1, len_min = 4, len_max = 16;
  std::string gen_file;
  gen->add_option("--rules-seed", rules_seed, "seed defining the synthetic language");
  gen->add_option("--n", gen_n, "number of sentences");
  gen->add_option("--radius", radius, "right-context radius for ambiguity");
  gen->add_option("--len-min", len_min, "minimum sentence length (tokens)");
  gen->add_option("--len-max", len_max, "maximum sentence length (tokens)");
  gen->add_option("--file", gen_file, "output path (default <out>/dataset.txt)");

  auto* train = app.add_subcommand("train", "train a model");
  std::string train_data, valid_data, precision;
  int steps = -1, batch_frames = -1;
  train->add_option("--data", train_data, "training dataset file");
  train->add_option("--valid", valid_data, "validation dataset file");
  train->add_option("--steps", steps, "training steps");
  train->add_option("--batch-frames", batch_frames, "dynamic batch frame cap");
  train->add_option("--precision", precision, "f32 or f64");

  auto* eval = app.add_subcommand("eval", "score hypotheses against references");
  std::string eval_ckpt, eval_data, hyp_file, ref_file, mask_override;
  bool profile = false;
  eval->add_option("--ckpt", eval_ckpt, "checkpoint to decode with");
  eval->add_option("--data", eval_data, "dataset file with references");
  eval->add_option("--hyp", hyp_file, "hypothesis label file (one sentence per line)");
  eval->add_option("--ref", ref_file, "reference label file");
  eval->add_flag("--profile", profile, "print the within-chunk offset error profile");
  eval->add_option("--masks", mask_override, "override mask mode: streaming or full");

  auto* stream = app.add_subcommand("stream", "incremental decoding from stdin");
  std::string stream_ckpt;
  bool binary = false, show_latency = false;
  stream->add_option("--ckpt", stream_ckpt, "checkpoint");
  stream->add_flag("--binary", binary, "length-prefixed binary token framing");
  stream->add_flag("--latency", show_latency, "print latency summary to stderr");

  auto* analyze = app.add_subcommand("analyze-mask", "render masks and receptive fields");
  int mask_tokens = 9, regular_w = 1;
  bool mask_frames = false;
  int opt_c = -1, opt_p = -1, opt_m = -1, opt_l = -1, opt_u = -1;
  analyze->add_option("--tokens", mask_tokens, "sequence length to render");
  analyze->add_flag("--frames", mask_frames, "render at frame granularity");
  analyze->add_option("--regular-w", regular_w, "per-layer look-ahead of the regular baseline");
  analyze->add_option("--c", opt_c, "chunk size override");
  analyze->add_option("--p", opt_p, "past context override");
  analyze->add_option("--m", opt_m, "minimum look-ahead override");
  analyze->add_option("--layers", opt_l, "layer count override");
  analyze->add_option("--u", opt_u, "upsampling factor override");

  auto* bench = app.add_subcommand("bench", "start-latency benchmark");
  std::string bench_ckpt;
  double tau = 0.0;
  int n_streams = 20, stream_len = 24;
  bench->add_option("--ckpt", bench_ckpt, "checkpoint (random init when omitted)");
  bench->add_option("--tau", tau, "simulated upstream seconds per token");
  bench->add_option("--n-streams", n_streams, "streams to measure");
  bench->add_option("--len", stream_len, "tokens per stream");

  CLI11_PARSE(app, argc, argv);
  if (seed_flag->count() > 0) g.seed = seed_opt;

  try {
    if (gen->parsed())
      return run_gen_data(g, rules_seed, gen_n, radius, len_min, len_max, gen_file);
    if (train->parsed()) {
      sg::RunConfig cfg = make_run_config(g);
      if (!train_data.empty()) cfg.train_data = train_data;
      if (!valid_data.empty()) cfg.valid_data = valid_data;
      if (steps >= 0) cfg.steps = steps;
      if (batch_frames > 0) cfg.batch_frames = batch_frames;
      if (!precision.empty()) cfg.apply("precision", precision);
      return run_train(std::move(cfg));
    }
    if (eval->parsed())
      return run_eval(eval_ckpt, eval_data, hyp_file, ref_file, profile, mask_override);
    if (stream->parsed()) return run_stream(stream_ckpt, binary, show_latency);
    if (analyze->parsed()) {
      sg::RunConfig cfg = make_run_config(g);
      if (opt_c > 0) cfg.model.chunk_tokens = opt_c;
      if (opt_p >= 0) cfg.model.past_tokens = opt_p;
      if (opt_m >= 0) cfg.model.mla_tokens = opt_m;
      if (opt_l > 0) cfg.model.layers = opt_l;
      if (opt_u > 0) cfg.model.upsample = opt_u;
      return run_analyze_mask(std::move(cfg), mask_tokens, mask_frames, regular_w);
    }
    if (bench->parsed()) return run_bench(bench_ckpt, make_run_config(g), tau, n_streams, stream_len);
  } catch (const sg::ConfigError& e) {
    std::cerr << "error(config): " << e.what() << "\n";
    return 2;
  } catch (const sg::InputError& e) {
    std::cerr << "error(input): " << e.what() << "\n";
    return 3;
  } catch (const sg::StateError& e) {
    std::cerr << "error(state): " << e.what() << "\n";
    return 4;
  } catch (const sg::ShapeError& e) {
    std::cerr << "error(shape): " << e.what() << "\n";
    return 5;
  } catch (const sg::ContractError& e) {
    std::cerr << "error(contract): " << e.what() << "\n";
    return 6;
  } catch (const sg::TrainError& e) {
    std::cerr << "error(training): " << e.what() << "\n";
    return 7;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
