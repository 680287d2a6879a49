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

#include "delayfuse/decoder.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <utility>

#include "delayfuse/log_math.h"

namespace delayfuse {

std::string FusionPolicy::Name() const {
  switch (kind) {
    case Kind::kAlways:
      return "always";
    case Kind::kNever:
      return "never";
    case Kind::kShortestHyp:
      return "shortest";
    case Kind::kFixedInterval:
      return "interval";
  }
  return "unknown";
}

FusionPolicy ParseFusionPolicy(const std::string& name, int interval) {
  if (name == "always" || name == "shallow") return FusionPolicy::Always();
  if (name == "never") return FusionPolicy::Never();
  if (name == "shortest") return FusionPolicy::ShortestHyp();
  if (name == "interval") {
    if (interval < 1) throw DecodeError("interval must be >= 1");
    return FusionPolicy::FixedInterval(interval);
  }
  throw DecodeError("unknown fusion policy '" + name + "'");
}

FusionGate::FusionGate(FusionPolicy policy) : policy_(policy) {
  if (policy_.kind == FusionPolicy::Kind::kFixedInterval &&
      policy_.interval < 1) {
    throw DecodeError("interval must be >= 1");
  }
}

bool FusionGate::Evaluate(int step, std::span<const std::size_t> lm_lens,
                          std::span<const std::size_t> scored_lens) {
  switch (policy_.kind) {
    case FusionPolicy::Kind::kAlways:
      return true;
    case FusionPolicy::Kind::kNever:
      return false;
    case FusionPolicy::Kind::kShortestHyp: {
      if (lm_lens.empty()) return false;
      const std::size_t shortest =
          *std::min_element(lm_lens.begin(), lm_lens.end());
      const bool grew = shortest > last_shortest_;
      last_shortest_ = shortest;
      return grew;
    }
    case FusionPolicy::Kind::kFixedInterval: {
      if (step % policy_.interval != 0) return false;
      for (std::size_t i = 0; i < lm_lens.size(); ++i) {
        if (lm_lens[i] > scored_lens[i]) return true;
      }
      return false;
    }
  }
  return false;
}

double CombinedScore(const Hypothesis& hyp, std::span<const LmBinding> lms) {
  double score = hyp.e2e;
  for (std::size_t i = 0; i < lms.size(); ++i) {
    score += lms[i].weight * hyp.lm[i].cache.cum_logprob;
  }
  return score;
}

namespace {

// A token sequence given as a stored prefix plus at most one appended id.
struct TokenView {
  std::span<const TokenId> head;
  std::optional<TokenId> tail;

  std::size_t size() const { return head.size() + (tail ? 1 : 0); }
  TokenId operator[](std::size_t i) const {
    return i < head.size() ? head[i] : *tail;
  }
};

bool ViewRanksBefore(double score_a, const TokenView& a, double score_b,
                     const TokenView& b) {
  if (score_a != score_b) return score_a > score_b;
  if (a.size() != b.size()) return a.size() < b.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return a[i] < b[i];
  }
  return false;
}

constexpr std::size_t kNoSource = std::numeric_limits<std::size_t>::max();

// An extension of beam[source] not yet materialized as a Hypothesis.
struct Candidate {
  std::size_t source = 0;
  std::optional<TokenId> token;
  // Beam entries whose LM tracks may be inherited; a merged prefix has two.
  std::size_t track_source = 0;
  std::size_t alt_track_source = kNoSource;
  CtcScorePair ctc;
  double e2e = 0.0;
  double lm_part = 0.0;
  bool ended = false;
};

std::size_t PickTrackSource(const Candidate& c, std::span<const Hypothesis> beam,
                            std::size_t lm_index) {
  if (c.alt_track_source == kNoSource) return c.track_source;
  const auto& a = beam[c.track_source].lm[lm_index].cache;
  const auto& b = beam[c.alt_track_source].lm[lm_index].cache;
  return b.scored_len > a.scored_len ? c.alt_track_source : c.track_source;
}

double LmPart(const Candidate& c, std::span<const Hypothesis> beam,
              std::span<const LmBinding> lms) {
  double part = 0.0;
  for (std::size_t i = 0; i < lms.size(); ++i) {
    part += lms[i].weight *
            beam[PickTrackSource(c, beam, i)].lm[i].cache.cum_logprob;
  }
  return part;
}

TokenView ViewOf(const Candidate& c, std::span<const Hypothesis> beam) {
  return {beam[c.source].tokens, c.token};
}

std::vector<Candidate> FrameSyncCandidates(std::span<const Hypothesis> beam,
                                           std::span<const double> frame,
                                           std::span<const LmBinding> lms) {
  const auto vocab = static_cast<TokenId>(frame.size());
  std::unordered_map<std::vector<TokenId>, std::size_t, TokenSeqHash> index;
  for (std::size_t i = 0; i < beam.size(); ++i) index.emplace(beam[i].tokens, i);

  // (parent, token) -> beam entry equal to parent + token.
  std::unordered_map<std::uint64_t, std::size_t> merge_target;
  for (std::size_t j = 0; j < beam.size(); ++j) {
    const auto& t = beam[j].tokens;
    if (t.size() < 2) continue;
    std::vector<TokenId> parent(t.begin(), t.end() - 1);
    if (auto it = index.find(parent); it != index.end()) {
      merge_target.emplace(it->second * static_cast<std::uint64_t>(vocab) +
                               static_cast<std::uint64_t>(t.back()),
                           j);
    }
  }

  std::vector<Candidate> out;
  out.reserve(beam.size() *
              (static_cast<std::size_t>(vocab - kNumSpecialTokens) + 1));
  // Stay candidates first so candidate i is beam entry i.
  for (std::size_t i = 0; i < beam.size(); ++i) {
    const auto& h = beam[i];
    const std::optional<TokenId> last =
        h.tokens.size() > 1 ? std::optional<TokenId>(h.tokens.back())
                            : std::nullopt;
    Candidate c;
    c.source = i;
    c.track_source = i;
    c.ctc = CtcStepExtend(h.ctc, frame, last, std::nullopt);
    out.push_back(c);
  }
  for (std::size_t i = 0; i < beam.size(); ++i) {
    const auto& h = beam[i];
    const std::optional<TokenId> last =
        h.tokens.size() > 1 ? std::optional<TokenId>(h.tokens.back())
                            : std::nullopt;
    for (TokenId v = kNumSpecialTokens; v < vocab; ++v) {
      const CtcScorePair ext = CtcStepExtend(h.ctc, frame, last, v);
      auto it = merge_target.find(i * static_cast<std::uint64_t>(vocab) +
                                  static_cast<std::uint64_t>(v));
      if (it != merge_target.end()) {
        Candidate& stay = out[it->second];
        stay.ctc.Merge(ext);
        stay.alt_track_source = i;
        continue;
      }
      Candidate c;
      c.source = i;
      c.token = v;
      c.track_source = i;
      c.ctc = ext;
      out.push_back(c);
    }
  }

  std::erase_if(out, [](const Candidate& c) {
    return IsLogZero(c.ctc.Total());
  });
  for (auto& c : out) {
    c.e2e = c.ctc.Total();
    c.lm_part = LmPart(c, beam, lms);
  }
  return out;
}

std::vector<Candidate> LabelSyncCandidates(std::span<const Hypothesis> beam,
                                           LabelSyncScorer& scorer,
                                           std::span<const LmBinding> lms) {
  const auto vocab = static_cast<TokenId>(scorer.vocab_size());
  std::vector<Candidate> out;
  for (std::size_t i = 0; i < beam.size(); ++i) {
    const auto& h = beam[i];
    if (h.ended) {
      Candidate c;
      c.source = i;
      c.track_source = i;
      c.e2e = h.e2e;
      c.ended = true;
      out.push_back(c);
      continue;
    }
    const auto scores =
        scorer.NextScores(std::span<const TokenId>(h.tokens).subspan(1));
    if (scores.size() != static_cast<std::size_t>(vocab)) {
      throw DecodeError("label-sync scorer returned a wrong-sized row");
    }
    auto push = [&](TokenId v) {
      if (IsLogZero(scores[v]) || std::isnan(scores[v])) return;
      Candidate c;
      c.source = i;
      c.token = v;
      c.track_source = i;
      c.e2e = h.e2e + scores[v];
      c.ended = v == kEosId;
      out.push_back(c);
    };
    for (TokenId v = kNumSpecialTokens; v < vocab; ++v) push(v);
    push(kEosId);
  }
  for (auto& c : out) c.lm_part = LmPart(c, beam, lms);
  return out;
}

Hypothesis Materialize(const Candidate& c, std::span<const Hypothesis> beam,
                       const Tokenizer& asr_tok,
                       std::span<const LmBinding> lms) {
  const Hypothesis& src = beam[c.source];
  Hypothesis h;
  h.tokens.reserve(src.tokens.size() + 1);
  h.tokens = src.tokens;
  if (c.token) h.tokens.push_back(*c.token);
  h.ctc = c.ctc;
  h.e2e = c.e2e;
  h.ended = c.ended;
  h.lm.reserve(lms.size());
  for (std::size_t i = 0; i < lms.size(); ++i) {
    const LmTrack& from = beam[PickTrackSource(c, beam, i)].lm[i];
    h.lm.push_back(LmTrack{
        from.cache,
        ExtendRetokenization(from.retok, h.tokens, asr_tok, *lms[i].tokenizer)});
  }
  return h;
}

std::vector<Hypothesis> MaterializeAll(std::span<const Candidate> cands,
                                       std::span<const Hypothesis> beam,
                                       const Tokenizer& asr_tok,
                                       std::span<const LmBinding> lms) {
  std::vector<Hypothesis> out;
  out.reserve(cands.size());
  for (const auto& c : cands) out.push_back(Materialize(c, beam, asr_tok, lms));
  return out;
}

// Top `beam_size` candidates, best first, materialized.
std::vector<Hypothesis> SelectTop(std::span<const Candidate> cands,
                                  std::span<const Hypothesis> beam,
                                  std::size_t beam_size,
                                  const Tokenizer& asr_tok,
                                  std::span<const LmBinding> lms) {
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t keep = std::min(beam_size, order.size());
  auto better = [&](std::size_t a, std::size_t b) {
    return ViewRanksBefore(cands[a].e2e + cands[a].lm_part, ViewOf(cands[a], beam),
                           cands[b].e2e + cands[b].lm_part, ViewOf(cands[b], beam));
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<long>(keep),
                    order.end(), better);
  std::vector<Hypothesis> out;
  out.reserve(keep);
  for (std::size_t k = 0; k < keep; ++k) {
    out.push_back(Materialize(cands[order[k]], beam, asr_tok, lms));
  }
  return out;
}

Hypothesis InitialHypothesis(std::size_t num_lms) {
  Hypothesis h;
  h.lm.resize(num_lms);
  return h;
}

void CheckBinding(const LmBinding& lm, std::size_t index) {
  const std::string which = "LM " + std::to_string(index);
  if (lm.scorer == nullptr) throw DecodeError(which + " has no scorer");
  if (lm.tokenizer == nullptr) throw DecodeError(which + " has no tokenizer");
  if (!std::isfinite(lm.weight)) throw DecodeError(which + " weight is not finite");
  if (lm.policy && lm.policy->kind == FusionPolicy::Kind::kFixedInterval &&
      lm.policy->interval < 1) {
    throw DecodeError(which + " interval must be >= 1");
  }
}

void ValidateConfig(const DecodeConfig& config, std::size_t asr_columns,
                    const Tokenizer& asr_tok) {
  if (config.beam < 1) throw DecodeError("beam must be >= 1");
  if (config.policy.kind == FusionPolicy::Kind::kFixedInterval &&
      config.policy.interval < 1) {
    throw DecodeError("interval must be >= 1");
  }
  if (asr_columns != asr_tok.vocab().size()) {
    throw DecodeError("emission width " + std::to_string(asr_columns) +
                      " does not match ASR vocabulary size " +
                      std::to_string(asr_tok.vocab().size()));
  }
  bool any_final = false;
  for (std::size_t i = 0; i < config.lms.size(); ++i) {
    CheckBinding(config.lms[i], i);
    any_final = any_final || config.lms[i].use_in_final;
  }
  if (!config.lms.empty() && !any_final) {
    throw DecodeError("no LM is used in the final selection");
  }
  if (config.timing == FusionTiming::kPrePrune) {
    for (const auto& lm : config.lms) {
      if (lm.policy.value_or(config.policy).kind !=
          FusionPolicy::Kind::kAlways) {
        throw DecodeError("pre-prune fusion requires policy always");
      }
    }
  }
  if (!(config.frames_per_token_estimate > 0.0)) {
    throw DecodeError("frames_per_token_estimate must be positive");
  }
}

void Accumulate(const LmScoringStats& stats, bool final_call,
                DecodeCounters* counters) {
  if (stats.called) ++(final_call ? counters->lm_final_calls : counters->lm_calls);
  counters->hyps_lm_scored += stats.hyps;
  counters->lm_tokens_scored += stats.tokens;
}

// Search state shared by both modes.
class Search {
 public:
  Search(const DecodeConfig& config, const Tokenizer& asr_tok)
      : config_(config),
        asr_tok_(asr_tok),
        lms_(config.lms),
        versions_(lms_.size(), 0),
        start_(std::chrono::steady_clock::now()) {
    gates_.reserve(lms_.size());
    for (const auto& lm : lms_) {
      gates_.emplace_back(lm.policy.value_or(config.policy));
    }
    beam_.push_back(InitialHypothesis(lms_.size()));
  }

  // One step: candidates -> (score) -> prune -> (score).
  void Step(int t, std::vector<Candidate> cands) {
    counters_.steps = t;
    counters_.hyps_expanded += cands.size();
    if (cands.empty()) throw DecodeError("every hypothesis has zero probability");
    if (config_.timing == FusionTiming::kPrePrune) {
      auto all = MaterializeAll(cands, beam_, asr_tok_, lms_);
      for (std::size_t i = 0; i < lms_.size(); ++i) {
        Accumulate(ApplyLmScores(all, i, lms_[i]), false, &counters_);
        ++versions_[i];
      }
      beam_ = Prune(std::move(all), config_.beam, lms_);
      NotifyPrune(t);
      return;
    }
    beam_ = SelectTop(cands, beam_, config_.beam, asr_tok_, lms_);
    NotifyPrune(t);
    std::vector<std::size_t> lens(beam_.size());
    std::vector<std::size_t> scored(beam_.size());
    for (std::size_t i = 0; i < lms_.size(); ++i) {
      for (std::size_t k = 0; k < beam_.size(); ++k) {
        lens[k] = beam_[k].lm[i].retok.lm_tokens.size();
        scored[k] = beam_[k].lm[i].cache.scored_len;
      }
      if (!gates_[i].Evaluate(t, lens, scored)) continue;
      const auto stats = ApplyLmScores(beam_, i, lms_[i]);
      Accumulate(stats, false, &counters_);
      if (stats.called) ++versions_[i];
    }
  }

  DecodeResult Finish() {
    DecodeResult result =
        Finalize(std::move(beam_), asr_tok_, lms_, counters_);
    result.counters.wall_ms =
        Millis(std::chrono::steady_clock::now() - start_).count();
    return result;
  }

  std::vector<Hypothesis>& beam() { return beam_; }
  std::span<const LmBinding> lms() const { return lms_; }

 private:
  using Millis = std::chrono::duration<double, std::milli>;

  void NotifyPrune(int t) {
    if (!config_.on_prune) return;
    PruneEvent event;
    event.step = t;
    event.lm_versions = versions_;
    event.kept = beam_;
    config_.on_prune(event);
  }

  const DecodeConfig& config_;
  const Tokenizer& asr_tok_;
  std::span<const LmBinding> lms_;
  std::vector<FusionGate> gates_;
  std::vector<std::uint64_t> versions_;
  std::vector<Hypothesis> beam_;
  DecodeCounters counters_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

bool RanksBefore(double score_a, std::span<const TokenId> a, double score_b,
                 std::span<const TokenId> b) {
  return ViewRanksBefore(score_a, TokenView{a, std::nullopt}, score_b,
                         TokenView{b, std::nullopt});
}

std::vector<Hypothesis> Prune(std::vector<Hypothesis> hyps, std::size_t beam,
                              std::span<const LmBinding> lms) {
  std::vector<double> scores(hyps.size());
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    scores[i] = CombinedScore(hyps[i], lms);
  }
  std::vector<std::size_t> order(hyps.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t keep = std::min(beam, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<long>(keep),
                    order.end(), [&](std::size_t a, std::size_t b) {
                      return RanksBefore(scores[a], hyps[a].tokens, scores[b],
                                         hyps[b].tokens);
                    });
  std::vector<Hypothesis> out;
  out.reserve(keep);
  for (std::size_t k = 0; k < keep; ++k) out.push_back(std::move(hyps[order[k]]));
  return out;
}

std::vector<Hypothesis> ExtendFrameSync(std::span<const Hypothesis> beam,
                                        std::span<const double> frame,
                                        const Tokenizer& asr_tok,
                                        std::span<const LmBinding> lms) {
  const auto cands = FrameSyncCandidates(beam, frame, lms);
  return MaterializeAll(cands, beam, asr_tok, lms);
}

std::vector<Hypothesis> ExtendLabelSync(std::span<const Hypothesis> beam,
                                        LabelSyncScorer& scorer,
                                        const Tokenizer& asr_tok,
                                        std::span<const LmBinding> lms) {
  const auto cands = LabelSyncCandidates(beam, scorer, lms);
  return MaterializeAll(cands, beam, asr_tok, lms);
}

LmScoringStats ApplyLmScores(std::span<Hypothesis> hyps, std::size_t lm_index,
                             const LmBinding& lm) {
  LmScoringStats stats;
  std::vector<ScoreRequest> batch;
  std::vector<std::size_t> owners;
  for (std::size_t k = 0; k < hyps.size(); ++k) {
    const LmTrack& track = hyps[k].lm[lm_index];
    const auto& pending = track.retok.lm_tokens;
    if (pending.size() <= track.cache.scored_len) continue;
    ScoreRequest req;
    req.tokens.reserve(pending.size() + 1);
    req.tokens.push_back(kBosId);
    req.tokens.insert(req.tokens.end(), pending.begin(), pending.end());
    req.cache = track.cache;
    stats.tokens += pending.size() - track.cache.scored_len;
    batch.push_back(std::move(req));
    owners.push_back(k);
  }
  if (batch.empty()) return stats;
  auto results = lm.scorer->ScoreBatchIncremental(batch);
  if (results.size() != batch.size()) {
    throw DecodeError("LM returned " + std::to_string(results.size()) +
                      " results for " + std::to_string(batch.size()) +
                      " requests");
  }
  for (std::size_t r = 0; r < results.size(); ++r) {
    hyps[owners[r]].lm[lm_index].cache = std::move(results[r].cache);
  }
  stats.called = true;
  stats.hyps = batch.size();
  return stats;
}

DecodeResult Finalize(std::vector<Hypothesis> beam, const Tokenizer& asr_tok,
                      std::span<const LmBinding> lms, DecodeCounters counters) {
  if (beam.empty()) throw DecodeError("cannot finalize an empty beam");
  DecodeResult result;
  result.nbest.resize(beam.size());
  for (std::size_t k = 0; k < beam.size(); ++k) {
    auto& entry = result.nbest[k];
    entry.tokens = beam[k].tokens;
    entry.text = asr_tok.Decode(beam[k].tokens);
    entry.e2e = beam[k].e2e;
    entry.lm_raw.assign(lms.size(), 0.0);
  }
  for (std::size_t i = 0; i < lms.size(); ++i) {
    std::vector<ScoreRequest> batch(beam.size());
    LmScoringStats stats;
    for (std::size_t k = 0; k < beam.size(); ++k) {
      const auto full =
          RetokenizeFull(beam[k].tokens, asr_tok, *lms[i].tokenizer);
      auto& req = batch[k];
      req.tokens.reserve(full.size() + 2);
      req.tokens.push_back(kBosId);
      req.tokens.insert(req.tokens.end(), full.begin(), full.end());
      req.tokens.push_back(kEosId);
      req.cache = beam[k].lm[i].cache;
      stats.tokens += req.tokens.size() - 1 - req.cache.scored_len;
    }
    const auto results = lms[i].scorer->ScoreBatchIncremental(batch);
    if (results.size() != batch.size()) {
      throw DecodeError("LM returned a wrong number of results");
    }
    stats.called = true;
    stats.hyps = batch.size();
    Accumulate(stats, true, &counters);
    for (std::size_t k = 0; k < beam.size(); ++k) {
      result.nbest[k].lm_raw[i] = results[k].cum_logprob;
    }
  }
  for (auto& entry : result.nbest) {
    entry.combined = entry.e2e;
    for (std::size_t i = 0; i < lms.size(); ++i) {
      if (lms[i].use_in_final) entry.combined += lms[i].weight * entry.lm_raw[i];
    }
  }
  std::sort(result.nbest.begin(), result.nbest.end(),
            [](const NBestEntry& a, const NBestEntry& b) {
              return RanksBefore(a.combined, a.tokens, b.combined, b.tokens);
            });
  result.counters = counters;
  return result;
}

DecodeResult Decode(const EmissionMatrix& emissions, const Tokenizer& asr_tok,
                    const DecodeConfig& config) {
  if (emissions.num_frames() == 0) throw DecodeError("empty emissions");
  if (config.mode == DecodeMode::kLabelSync) {
    CtcLabelSyncScorer scorer(emissions);
    return Decode(scorer, emissions.num_frames(), asr_tok, config);
  }
  ValidateConfig(config, emissions.vocab_size(), asr_tok);
  Search search(config, asr_tok);
  for (std::size_t t = 0; t < emissions.num_frames(); ++t) {
    search.Step(static_cast<int>(t) + 1,
                FrameSyncCandidates(search.beam(), emissions.row(t),
                                    search.lms()));
  }
  return search.Finish();
}

DecodeResult Decode(LabelSyncScorer& scorer, std::size_t num_frames,
                    const Tokenizer& asr_tok, const DecodeConfig& config) {
  if (num_frames == 0) throw DecodeError("empty emissions");
  ValidateConfig(config, scorer.vocab_size(), asr_tok);
  int max_steps = config.max_label_steps;
  if (max_steps <= 0) {
    const double derived =
        std::ceil(2.0 * static_cast<double>(num_frames) /
                  config.frames_per_token_estimate) +
        1.0;
    max_steps = static_cast<int>(
        std::min(static_cast<double>(num_frames) + 1.0, derived));
  }
  Search search(config, asr_tok);
  auto all_ended = [&] {
    return std::all_of(search.beam().begin(), search.beam().end(),
                       [](const Hypothesis& h) { return h.ended; });
  };
  for (int t = 1; t <= max_steps && !all_ended(); ++t) {
    search.Step(t, LabelSyncCandidates(search.beam(), scorer, search.lms()));
  }
  // Hypotheses cut off by the step bound end here.
  for (auto& h : search.beam()) {
    if (h.ended) continue;
    const auto scores =
        scorer.NextScores(std::span<const TokenId>(h.tokens).subspan(1));
    h.e2e += scores[kEosId];
    h.tokens.push_back(kEosId);
    h.ended = true;
  }
  return search.Finish();
}

}  // namespace delayfuse
