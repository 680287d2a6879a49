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

// Policy/beam sweeps over synthetic utterances, aggregated into CSV rows.

#ifndef DELAYFUSE_BENCH_H_
#define DELAYFUSE_BENCH_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "delayfuse/dataset.h"
#include "delayfuse/decoder.h"
#include "delayfuse/ngram_model.h"
#include "delayfuse/tokenization.h"
#include "delayfuse/wer.h"

namespace delayfuse {

struct BenchConfig {
  std::uint64_t seed = 1;
  // Datasets are drawn for seeds seed, seed+1, ..., seed+seeds-1 and pooled.
  int seeds = 1;
  // Empty: use the built-in generator.
  std::string corpus;
  std::size_t corpus_sentences = 2000;
  std::uint64_t corpus_seed = 7;
  std::size_t asr_vocab_size = 80;
  // 0 shares the ASR vocabulary.
  std::size_t lm_vocab_size = 160;
  int lm_order = 4;
  double lm_discount = 0.5;
  std::size_t utterances = 50;
  double noise = 0.4;
  int min_frames_per_token = 1;
  int max_frames_per_token = 3;
  double blank_prob = 0.5;
  DecodeMode mode = DecodeMode::kFrameSync;
  // Names accepted by ParseFusionPolicy; "interval" expands over intervals.
  std::vector<std::string> policies = {"never", "shortest", "interval",
                                       "always"};
  std::vector<std::size_t> beams = {10};
  std::vector<int> intervals = {16, 32, 64};
  std::vector<double> lm_weights = {0.4};
  bool baseline = true;
  bool shallow_reference = true;
  // Adds a row fusing a shared-vocabulary n-gram at every step next to the
  // main LM under ShortestHyp, weight split evenly; only the main LM counts
  // in the final selection.
  bool combined = false;
  int nlm_order = 2;
  double latency_per_call_ms = 0.0;
  double latency_per_token_ms = 0.0;
  int threads = 1;
  std::string output;
};

// "key = value" lines; '#' starts a comment; lists are comma-separated;
// values may be double-quoted; "[section]" lines are ignored. Throws
// std::invalid_argument on unknown keys or bad values.
BenchConfig ParseBenchConfig(const std::string& text);
BenchConfig LoadBenchConfig(const std::string& path);

// Corpus, tokenizers, LMs and datasets shared by every cell.
struct BenchAssets {
  std::vector<std::string> train;
  std::vector<std::string> eval;
  std::shared_ptr<const Tokenizer> asr_tok;
  std::shared_ptr<const Tokenizer> lm_tok;
  std::shared_ptr<NGramModel> lm;
  // Shared-vocabulary n-gram for combined rows; null unless requested.
  std::shared_ptr<NGramModel> nlm;
  // One dataset per seed.
  std::vector<std::vector<Utterance>> datasets;
};

BenchAssets PrepareBench(const BenchConfig& config);

struct BenchRow {
  // none (no LM), a policy name, shallow-ref or combined.
  std::string policy;
  std::string mode;
  std::size_t beam = 0;
  int interval = 0;
  double lm_weight = 0.0;
  std::size_t utterances = 0;
  WerStats errors;
  std::uint64_t lm_calls = 0;
  std::uint64_t lm_final_calls = 0;
  std::uint64_t lm_tokens_scored = 0;
  std::uint64_t hyps_lm_scored = 0;
  std::uint64_t hyps_expanded = 0;
  // "ok", or "failed" with the reason in `error`.
  std::string status = "ok";
  std::string error;
  double decode_ms = 0.0;
  double emulated_lm_ms = 0.0;
};

// One cell: decodes every utterance of every dataset.
BenchRow RunBenchCell(const BenchConfig& config, const BenchAssets& assets,
                      const std::string& policy, std::size_t beam,
                      int interval, double lm_weight);

// Rows in sweep order: per beam, the no-LM baseline, then per weight each
// policy (intervals expanded), shallow-ref and combined.
std::vector<BenchRow> RunBench(const BenchConfig& config,
                               const BenchAssets& assets);

// Column order is fixed; see README.
void WriteBenchCsv(const std::vector<BenchRow>& rows, std::ostream& out);

}  // namespace delayfuse

#endif  // DELAYFUSE_BENCH_H_
