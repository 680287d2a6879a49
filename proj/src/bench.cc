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

#include "delayfuse/bench.h"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "delayfuse/corpus.h"
#include "delayfuse/latency_scorer.h"

namespace delayfuse {

namespace {

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  std::string out(s.substr(b, e - b + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
    out = out.substr(1, out.size() - 2);
  }
  return out;
}

std::vector<std::string> SplitList(const std::string& value) {
  std::vector<std::string> items;
  std::string_view rest = value;
  if (rest.size() >= 2 && rest.front() == '[' && rest.back() == ']') {
    rest = rest.substr(1, rest.size() - 2);
  }
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    auto item = Trim(rest.substr(0, comma));
    if (!item.empty()) items.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return items;
}

double ToDouble(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw std::invalid_argument(key + ": not a number: '" + v + "'");
  }
  return x;
}

long long ToInt(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw std::invalid_argument(key + ": not an integer: '" + v + "'");
  }
  return x;
}

std::size_t ToCount(const std::string& key, const std::string& v) {
  const long long x = ToInt(key, v);
  if (x < 0) throw std::invalid_argument(key + " must be non-negative");
  return static_cast<std::size_t>(x);
}

bool ToBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw std::invalid_argument(key + ": not a boolean: '" + v + "'");
}

std::string ModeName(DecodeMode mode) {
  return mode == DecodeMode::kFrameSync ? "ctc" : "labelsync";
}

void Validate(const BenchConfig& c) {
  if (c.seeds < 1) throw std::invalid_argument("seeds must be >= 1");
  if (c.utterances < 1) throw std::invalid_argument("utterances must be >= 1");
  if (c.corpus_sentences < 1) {
    throw std::invalid_argument("corpus_sentences must be >= 1");
  }
  if (c.policies.empty() && !c.baseline && !c.shallow_reference &&
      !c.combined) {
    throw std::invalid_argument("at least one policy is required");
  }
  if (c.beams.empty()) throw std::invalid_argument("at least one beam size");
  for (auto b : c.beams) {
    if (b < 1) throw std::invalid_argument("beam sizes must be >= 1");
  }
  for (int i : c.intervals) {
    if (i < 1) throw std::invalid_argument("intervals must be >= 1");
  }
  for (const auto& p : c.policies) {
    ParseFusionPolicy(p, c.intervals.empty() ? 1 : c.intervals.front());
    if (p == "interval" && c.intervals.empty()) {
      throw std::invalid_argument("policy interval needs intervals");
    }
  }
  if (c.lm_weights.empty()) throw std::invalid_argument("at least one weight");
  if (c.threads < 1) throw std::invalid_argument("threads must be >= 1");
  if (c.latency_per_call_ms < 0 || c.latency_per_token_ms < 0) {
    throw std::invalid_argument("latency costs must be non-negative");
  }
}

std::vector<std::vector<TokenId>> EncodeAll(std::span<const std::string> lines,
                                            const Tokenizer& tok) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(tok.Encode(l));
  return out;
}

struct UttOutcome {
  WerStats wer;
  DecodeCounters counters;
};

}  // namespace

BenchConfig ParseBenchConfig(const std::string& text) {
  BenchConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::unordered_map<std::string, Setter> setters = {
      {"seed", [&](auto& k, auto& v) { c.seed = ToCount(k, v); }},
      {"seeds", [&](auto& k, auto& v) { c.seeds = static_cast<int>(ToInt(k, v)); }},
      {"corpus", [&](auto&, auto& v) { c.corpus = v; }},
      {"corpus_sentences",
       [&](auto& k, auto& v) { c.corpus_sentences = ToCount(k, v); }},
      {"corpus_seed", [&](auto& k, auto& v) { c.corpus_seed = ToCount(k, v); }},
      {"asr_vocab_size",
       [&](auto& k, auto& v) { c.asr_vocab_size = ToCount(k, v); }},
      {"lm_vocab_size",
       [&](auto& k, auto& v) { c.lm_vocab_size = ToCount(k, v); }},
      {"lm_order", [&](auto& k, auto& v) { c.lm_order = static_cast<int>(ToInt(k, v)); }},
      {"lm_discount", [&](auto& k, auto& v) { c.lm_discount = ToDouble(k, v); }},
      {"utterances", [&](auto& k, auto& v) { c.utterances = ToCount(k, v); }},
      {"noise", [&](auto& k, auto& v) { c.noise = ToDouble(k, v); }},
      {"min_frames_per_token",
       [&](auto& k, auto& v) { c.min_frames_per_token = static_cast<int>(ToInt(k, v)); }},
      {"max_frames_per_token",
       [&](auto& k, auto& v) { c.max_frames_per_token = static_cast<int>(ToInt(k, v)); }},
      {"blank_prob", [&](auto& k, auto& v) { c.blank_prob = ToDouble(k, v); }},
      {"mode",
       [&](auto& k, auto& v) {
         if (v == "ctc") {
           c.mode = DecodeMode::kFrameSync;
         } else if (v == "labelsync") {
           c.mode = DecodeMode::kLabelSync;
         } else {
           throw std::invalid_argument(k + ": expected ctc or labelsync");
         }
       }},
      {"policies", [&](auto&, auto& v) { c.policies = SplitList(v); }},
      {"beams",
       [&](auto& k, auto& v) {
         c.beams.clear();
         for (const auto& x : SplitList(v)) c.beams.push_back(ToCount(k, x));
       }},
      {"intervals",
       [&](auto& k, auto& v) {
         c.intervals.clear();
         for (const auto& x : SplitList(v)) {
           c.intervals.push_back(static_cast<int>(ToInt(k, x)));
         }
       }},
      {"lm_weights",
       [&](auto& k, auto& v) {
         c.lm_weights.clear();
         for (const auto& x : SplitList(v)) c.lm_weights.push_back(ToDouble(k, x));
       }},
      {"baseline", [&](auto& k, auto& v) { c.baseline = ToBool(k, v); }},
      {"shallow_reference",
       [&](auto& k, auto& v) { c.shallow_reference = ToBool(k, v); }},
      {"combined", [&](auto& k, auto& v) { c.combined = ToBool(k, v); }},
      {"nlm_order", [&](auto& k, auto& v) { c.nlm_order = static_cast<int>(ToInt(k, v)); }},
      {"latency_per_call_ms",
       [&](auto& k, auto& v) { c.latency_per_call_ms = ToDouble(k, v); }},
      {"latency_per_token_ms",
       [&](auto& k, auto& v) { c.latency_per_token_ms = ToDouble(k, v); }},
      {"threads", [&](auto& k, auto& v) { c.threads = static_cast<int>(ToInt(k, v)); }},
      {"output", [&](auto&, auto& v) { c.output = v; }},
  };

  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    const std::string trimmed = Trim(line);
    if (trimmed.empty() || trimmed.front() == '[') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("line " + std::to_string(line_no) +
                                  ": expected key = value");
    }
    const std::string key = Trim(trimmed.substr(0, eq));
    const std::string value = Trim(trimmed.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) {
      throw std::invalid_argument("line " + std::to_string(line_no) +
                                  ": unknown key '" + key + "'");
    }
    it->second(key, value);
  }
  Validate(c);
  return c;
}

BenchConfig LoadBenchConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open bench config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseBenchConfig(ss.str());
}

BenchAssets PrepareBench(const BenchConfig& config) {
  Validate(config);
  const auto corpus = config.corpus.empty()
                          ? GenerateCorpus(config.corpus_sentences,
                                           config.corpus_seed)
                          : ReadLines(config.corpus);
  auto split = SplitCorpus(corpus);
  if (split.train.empty()) throw std::invalid_argument("empty training split");

  BenchAssets assets;
  assets.asr_tok = std::make_shared<const Tokenizer>(
      BuildVocab(split.train, config.asr_vocab_size));
  assets.lm_tok = config.lm_vocab_size == 0
                      ? assets.asr_tok
                      : std::make_shared<const Tokenizer>(
                            BuildVocab(split.train, config.lm_vocab_size));
  const auto lm_vocab =
      std::make_shared<const Vocabulary>(assets.lm_tok->vocab());
  assets.lm = TrainNGram(EncodeAll(split.train, *assets.lm_tok),
                         config.lm_order, config.lm_discount, lm_vocab);
  if (config.combined) {
    const auto asr_vocab =
        std::make_shared<const Vocabulary>(assets.asr_tok->vocab());
    assets.nlm = TrainNGram(EncodeAll(split.train, *assets.asr_tok),
                            config.nlm_order, config.lm_discount, asr_vocab);
  }
  for (int s = 0; s < config.seeds; ++s) {
    DatasetOptions opts;
    opts.count = config.utterances;
    opts.noise = config.noise;
    opts.min_frames_per_token = config.min_frames_per_token;
    opts.max_frames_per_token = config.max_frames_per_token;
    opts.blank_prob = config.blank_prob;
    opts.seed = config.seed + static_cast<std::uint64_t>(s);
    assets.datasets.push_back(GenerateDataset(split.eval, *assets.asr_tok, opts));
  }
  assets.train = std::move(split.train);
  assets.eval = std::move(split.eval);
  return assets;
}

BenchRow RunBenchCell(const BenchConfig& config, const BenchAssets& assets,
                      const std::string& policy, std::size_t beam,
                      int interval, double lm_weight) {
  BenchRow row;
  row.policy = policy;
  row.mode = ModeName(config.mode);
  row.beam = beam;
  row.interval = policy == "interval" ? interval : 0;
  row.lm_weight = policy == "none" ? 0.0 : lm_weight;

  std::vector<const Utterance*> utts;
  for (const auto& ds : assets.datasets) {
    for (const auto& u : ds) utts.push_back(&u);
  }
  row.utterances = utts.size();

  const Millis per_call(config.latency_per_call_ms);
  const Millis per_token(config.latency_per_token_ms);
  std::shared_ptr<LatencyScorer> lm;
  std::shared_ptr<LatencyScorer> nlm;
  DecodeConfig dc;
  dc.beam = beam;
  dc.mode = config.mode;
  try {
    if (policy != "none") {
      lm = WrapWithLatency(assets.lm, per_call, per_token);
      if (policy == "shallow-ref") {
        dc.policy = FusionPolicy::Always();
        dc.timing = FusionTiming::kPrePrune;
        dc.lms.push_back({lm.get(), assets.lm_tok.get(), lm_weight, true, {}});
      } else if (policy == "combined") {
        if (!assets.nlm) throw std::invalid_argument("combined row needs an NLM");
        nlm = WrapWithLatency(assets.nlm, per_call, per_token);
        dc.policy = FusionPolicy::ShortestHyp();
        dc.lms.push_back({nlm.get(), assets.asr_tok.get(), lm_weight / 2, false,
                          FusionPolicy::Always()});
        dc.lms.push_back({lm.get(), assets.lm_tok.get(), lm_weight / 2, true, {}});
      } else {
        dc.policy = ParseFusionPolicy(policy, interval);
        dc.lms.push_back({lm.get(), assets.lm_tok.get(), lm_weight, true, {}});
      }
    }
  } catch (const std::exception& e) {
    row.status = "failed";
    row.error = e.what();
    return row;
  }

  auto scorer_calls = [&] {
    std::uint64_t calls = 0;
    for (const auto& b : dc.lms) calls += b.scorer->counters().calls;
    return calls;
  };
  const std::uint64_t calls_before = scorer_calls();

  std::vector<UttOutcome> outcomes(utts.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mu;
  std::string first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < utts.size(); i = next++) {
      try {
        const auto result = Decode(utts[i]->emissions, *assets.asr_tok, dc);
        outcomes[i].wer = ComputeWer(utts[i]->reference, result.best().text);
        outcomes[i].counters = result.counters;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (first_error.empty()) first_error = utts[i]->id + ": " + e.what();
      }
    }
  };
  const auto start = std::chrono::steady_clock::now();
  const int workers = std::min<int>(config.threads, static_cast<int>(utts.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  row.decode_ms = Millis(std::chrono::steady_clock::now() - start).count();

  for (const auto& o : outcomes) {
    row.errors += o.wer;
    row.lm_calls += o.counters.lm_calls;
    row.lm_final_calls += o.counters.lm_final_calls;
    row.lm_tokens_scored += o.counters.lm_tokens_scored;
    row.hyps_lm_scored += o.counters.hyps_lm_scored;
    row.hyps_expanded += o.counters.hyps_expanded;
  }
  if (lm) row.emulated_lm_ms += lm->emulated_time().count();
  if (nlm) row.emulated_lm_ms += nlm->emulated_time().count();

  if (!first_error.empty()) {
    row.status = "failed";
    row.error = first_error;
  } else if (scorer_calls() - calls_before != row.lm_calls + row.lm_final_calls) {
    row.status = "failed";
    row.error = "decoder call counters disagree with the scorer";
  }
  return row;
}

std::vector<BenchRow> RunBench(const BenchConfig& config,
                               const BenchAssets& assets) {
  Validate(config);
  std::vector<BenchRow> rows;
  for (std::size_t beam : config.beams) {
    if (config.baseline) {
      rows.push_back(RunBenchCell(config, assets, "none", beam, 0, 0.0));
    }
    for (double w : config.lm_weights) {
      for (const auto& p : config.policies) {
        if (p == "interval") {
          for (int i : config.intervals) {
            rows.push_back(RunBenchCell(config, assets, p, beam, i, w));
          }
        } else {
          rows.push_back(RunBenchCell(config, assets, p, beam, 0, w));
        }
      }
      if (config.shallow_reference) {
        rows.push_back(RunBenchCell(config, assets, "shallow-ref", beam, 0, w));
      }
      if (config.combined) {
        rows.push_back(RunBenchCell(config, assets, "combined", beam, 0, w));
      }
    }
  }
  return rows;
}

void WriteBenchCsv(const std::vector<BenchRow>& rows, std::ostream& out) {
  out << "policy,mode,beam,interval,lm_weight,utterances,ref_words,wer,subs,"
         "ins,dels,lm_calls,lm_final_calls,lm_tokens_scored,hyps_lm_scored,"
         "hyps_expanded,status,decode_ms,emulated_lm_ms\n";
  char buf[64];
  for (const auto& r : rows) {
    out << r.policy << ',' << r.mode << ',' << r.beam << ',' << r.interval
        << ',';
    std::snprintf(buf, sizeof(buf), "%g", r.lm_weight);
    out << buf << ',' << r.utterances << ',' << r.errors.ref_words << ',';
    std::snprintf(buf, sizeof(buf), "%.4f", 100.0 * r.errors.wer());
    out << buf << ',' << r.errors.subs << ',' << r.errors.ins << ','
        << r.errors.dels << ',' << r.lm_calls << ',' << r.lm_final_calls << ','
        << r.lm_tokens_scored << ',' << r.hyps_lm_scored << ','
        << r.hyps_expanded << ',' << r.status << ',';
    std::snprintf(buf, sizeof(buf), "%.3f", r.decode_ms);
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.3f", r.emulated_lm_ms);
    out << buf << '\n';
  }
}

}  // namespace delayfuse
