// Copyright 2026 The Delayfuse Authors
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

// delayfuse: vocabulary/LM preparation, synthetic data, decoding, sweeps
// and a CTC oracle check.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "delayfuse/bench.h"
#include "delayfuse/corpus.h"
#include "delayfuse/ctc.h"
#include "delayfuse/dataset.h"
#include "delayfuse/decoder.h"
#include "delayfuse/emissions.h"
#include "delayfuse/ngram_model.h"
#include "delayfuse/tokenization.h"

namespace {

using namespace delayfuse;
using json = nlohmann::json;

std::vector<std::vector<TokenId>> EncodeLines(
    const std::vector<std::string>& lines, const Tokenizer& tok) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(tok.Encode(l));
  return out;
}

std::vector<TokenId> ParseIds(const std::string& text) {
  std::vector<TokenId> ids;
  std::string s = text;
  for (char& c : s) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(s);
  long long v = 0;
  while (in >> v) ids.push_back(static_cast<TokenId>(v));
  if (!in.eof()) throw std::invalid_argument("bad label list '" + text + "'");
  return ids;
}

bool YesNo(const std::string& v) {
  if (v == "yes") return true;
  if (v == "no") return false;
  throw std::invalid_argument("expected yes or no, got '" + v + "'");
}

struct DecodeArgs {
  std::string emissions, asr_vocab, lm, lm_vocab;
  std::string policy = "shortest";
  int interval = 16;
  std::size_t beam = 10;
  double lm_weight = 0.5;
  std::string second_lm, second_lm_vocab;
  double second_weight = 0.0;
  std::string second_final = "no";
  std::string second_policy = "always";
  std::string mode = "ctc";
  bool json = false;
};

int RunDecode(const DecodeArgs& a) {
  const auto emissions = EmissionMatrix::Load(a.emissions);
  const Tokenizer asr_tok(Vocabulary::Load(a.asr_vocab));

  std::vector<std::unique_ptr<Tokenizer>> toks;
  std::vector<std::unique_ptr<NGramModel>> models;
  DecodeConfig config;
  config.beam = a.beam;
  config.mode = a.mode == "labelsync" ? DecodeMode::kLabelSync
                                      : DecodeMode::kFrameSync;
  config.policy = ParseFusionPolicy(a.policy, a.interval);
  auto add_lm = [&](const std::string& lm_path, const std::string& vocab_path,
                    double weight, bool final,
                    std::optional<FusionPolicy> policy) {
    auto vocab = std::make_shared<const Vocabulary>(Vocabulary::Load(vocab_path));
    toks.push_back(std::make_unique<Tokenizer>(*vocab));
    models.push_back(ReadArpa(lm_path, vocab));
    config.lms.push_back(
        {models.back().get(), toks.back().get(), weight, final, policy});
  };
  if (!a.lm.empty()) {
    if (a.lm_vocab.empty()) throw std::invalid_argument("--lm needs --lm-vocab");
    add_lm(a.lm, a.lm_vocab, a.lm_weight, true, std::nullopt);
  }
  if (!a.second_lm.empty()) {
    add_lm(a.second_lm,
           a.second_lm_vocab.empty() ? a.asr_vocab : a.second_lm_vocab,
           a.second_weight, YesNo(a.second_final),
           ParseFusionPolicy(a.second_policy, a.interval));
  }

  const auto result = Decode(emissions, asr_tok, config);
  if (!a.json) {
    std::cout << result.best().text << '\n';
    return 0;
  }
  json out;
  out["best"] = result.best().text;
  json nbest = json::array();
  for (const auto& e : result.nbest) {
    nbest.push_back({{"text", e.text},
                     {"tokens", e.tokens},
                     {"e2e", e.e2e},
                     {"lm", e.lm_raw},
                     {"combined", e.combined}});
  }
  out["nbest"] = nbest;
  const auto& c = result.counters;
  out["counters"] = {{"lm_calls", c.lm_calls},
                     {"lm_final_calls", c.lm_final_calls},
                     {"hyps_lm_scored", c.hyps_lm_scored},
                     {"lm_tokens_scored", c.lm_tokens_scored},
                     {"hyps_expanded", c.hyps_expanded},
                     {"steps", c.steps},
                     {"wall_ms", c.wall_ms}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int RunOracleCtc(const std::string& path, const std::string& labels_text) {
  const auto emissions = EmissionMatrix::Load(path);
  const auto labels = ParseIds(labels_text);
  const double dp = CtcSequenceLogProb(emissions, labels);
  const double dp_prefix = CtcPrefixLogProb(emissions, labels);
  const double bf = BruteForceCtc(emissions, labels);
  const double bf_prefix = BruteForceCtcPrefix(emissions, labels);
  auto agree = [](double x, double y) {
    return (std::isinf(x) && std::isinf(y)) || std::abs(x - y) <= 1e-9;
  };
  const bool ok = agree(dp, bf) && agree(dp_prefix, bf_prefix);
  std::printf("sequence  recursion=%.12f  enumeration=%.12f\n", dp, bf);
  std::printf("prefix    recursion=%.12f  enumeration=%.12f\n", dp_prefix,
              bf_prefix);
  std::printf("%s\n", ok ? "OK" : "MISMATCH");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Beam search with delayed LM fusion"};
  app.require_subcommand(1);

  std::string corpus, vocab_out;
  std::size_t vocab_size = 0;
  auto* build_vocab = app.add_subcommand("build-vocab", "Build a wordpiece vocabulary");
  build_vocab->add_option("--corpus", corpus, "Text corpus, one sentence per line")->required();
  build_vocab->add_option("--size", vocab_size, "Target vocabulary size")->required();
  build_vocab->add_option("--out", vocab_out, "Output vocabulary file")->required();

  std::string lm_vocab, lm_out;
  int order = 3;
  double discount = 0.5;
  auto* train_lm = app.add_subcommand("train-lm", "Train an n-gram LM (ARPA) on the training split");
  train_lm->add_option("--corpus", corpus)->required();
  train_lm->add_option("--vocab", lm_vocab)->required();
  train_lm->add_option("--order", order)->required();
  train_lm->add_option("--discount", discount)->required();
  train_lm->add_option("--out", lm_out)->required();

  DatasetOptions data_opts;
  std::string data_vocab, data_out;
  auto* gen_data = app.add_subcommand("gen-data", "Synthesize utterances from the held-out split");
  gen_data->add_option("--corpus", corpus)->required();
  gen_data->add_option("--vocab", data_vocab)->required();
  gen_data->add_option("--count", data_opts.count)->required();
  gen_data->add_option("--noise", data_opts.noise)->required();
  gen_data->add_option("--seed", data_opts.seed)->required();
  gen_data->add_option("--out", data_out)->required();
  gen_data->add_option("--min-frames", data_opts.min_frames_per_token);
  gen_data->add_option("--max-frames", data_opts.max_frames_per_token);
  gen_data->add_option("--blank-prob", data_opts.blank_prob);

  DecodeArgs d;
  auto* decode = app.add_subcommand("decode", "Decode one emission file");
  decode->add_option("--emissions", d.emissions)->required();
  decode->add_option("--asr-vocab", d.asr_vocab)->required();
  decode->add_option("--lm", d.lm);
  decode->add_option("--lm-vocab", d.lm_vocab);
  decode->add_option("--policy", d.policy)
      ->check(CLI::IsMember({"shallow", "never", "shortest", "interval"}));
  decode->add_option("--interval", d.interval);
  decode->add_option("--beam", d.beam);
  decode->add_option("--lm-weight", d.lm_weight);
  decode->add_option("--second-lm", d.second_lm);
  decode->add_option("--second-lm-vocab", d.second_lm_vocab,
                     "Defaults to the ASR vocabulary");
  decode->add_option("--second-weight", d.second_weight);
  decode->add_option("--second-final", d.second_final)
      ->check(CLI::IsMember({"yes", "no"}));
  decode->add_option("--second-policy", d.second_policy)
      ->check(CLI::IsMember({"shallow", "never", "shortest", "interval"}));
  decode->add_option("--mode", d.mode)->check(CLI::IsMember({"ctc", "labelsync"}));
  decode->add_flag("--json", d.json);

  std::string bench_config, bench_out;
  auto* bench = app.add_subcommand("bench", "Run a policy/beam sweep");
  bench->add_option("--config", bench_config)->required();
  bench->add_option("--out", bench_out);

  std::string oracle_emissions, oracle_labels;
  auto* oracle = app.add_subcommand("oracle", "Self-checks against exhaustive oracles");
  oracle->require_subcommand(1);
  auto* oracle_ctc = oracle->add_subcommand("ctc", "Recursion vs path enumeration");
  oracle_ctc->add_option("--emissions", oracle_emissions)->required();
  oracle_ctc->add_option("--labels", oracle_labels, "Label ids, space or comma separated")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build_vocab) {
      BuildVocab(ReadLines(corpus), vocab_size).Save(vocab_out);
    } else if (*train_lm) {
      const auto split = SplitCorpus(ReadLines(corpus));
      auto vocab = std::make_shared<const Vocabulary>(Vocabulary::Load(lm_vocab));
      const Tokenizer tok(*vocab);
      const auto model = TrainNGram(EncodeLines(split.train, tok), order, discount, vocab);
      WriteArpa(*model, lm_out);
    } else if (*gen_data) {
      const auto split = SplitCorpus(ReadLines(corpus));
      const Tokenizer tok(Vocabulary::Load(data_vocab));
      const auto utts = GenerateDataset(split.eval, tok, data_opts);
      WriteDataset(utts, data_out);
    } else if (*decode) {
      return RunDecode(d);
    } else if (*bench) {
      auto config = LoadBenchConfig(bench_config);
      if (!bench_out.empty()) config.output = bench_out;
      const auto assets = PrepareBench(config);
      const auto rows = RunBench(config, assets);
      for (const auto& r : rows) {
        if (r.status != "ok") {
          std::cerr << "cell " << r.policy << " beam=" << r.beam
                    << " failed: " << r.error << '\n';
        }
      }
      if (config.output.empty()) {
        WriteBenchCsv(rows, std::cout);
      } else {
        std::ofstream out(config.output, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + config.output);
        WriteBenchCsv(rows, out);
      }
    } else if (*oracle_ctc) {
      return RunOracleCtc(oracle_emissions, oracle_labels);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
