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

// Beam search with delayed LM fusion. LM scores are applied after pruning,
// at steps chosen by a FusionPolicy; in between, pruning uses the last
// computed (stale) LM scores. Supports CTC frame-synchronous search and
// label-synchronous search over a LabelSyncScorer.

#ifndef DELAYFUSE_DECODER_H_
#define DELAYFUSE_DECODER_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "delayfuse/ctc.h"
#include "delayfuse/emissions.h"
#include "delayfuse/lm_scorer.h"
#include "delayfuse/tokenization.h"

namespace delayfuse {

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DecodeMode { kFrameSync, kLabelSync };

struct FusionPolicy {
  enum class Kind { kAlways, kNever, kShortestHyp, kFixedInterval };

  Kind kind = Kind::kShortestHyp;
  int interval = 1;  // FixedInterval only; >= 1.

  static FusionPolicy Always() { return {Kind::kAlways, 1}; }
  static FusionPolicy Never() { return {Kind::kNever, 1}; }
  static FusionPolicy ShortestHyp() { return {Kind::kShortestHyp, 1}; }
  static FusionPolicy FixedInterval(int i) { return {Kind::kFixedInterval, i}; }

  // "always", "never", "shortest", "interval".
  std::string Name() const;

  bool operator==(const FusionPolicy&) const = default;
};

// Parses "always" (or "shallow"), "never", "shortest", "interval".
FusionPolicy ParseFusionPolicy(const std::string& name, int interval);

// Decides, once per step and per LM, whether LM scoring runs.
class FusionGate {
 public:
  explicit FusionGate(FusionPolicy policy);

  // `lm_lens[i]` is the LM-token length of hypothesis i's tokenizable
  // prefix; `scored_lens[i]` how many of those tokens its cache covers.
  // ShortestHyp fires when the minimum of lm_lens grew since the previous
  // evaluation. FixedInterval fires when step % I == 0 and some hypothesis
  // has unscored tokens.
  bool Evaluate(int step, std::span<const std::size_t> lm_lens,
                std::span<const std::size_t> scored_lens);

  const FusionPolicy& policy() const { return policy_; }

 private:
  FusionPolicy policy_;
  std::size_t last_shortest_ = 0;
};

struct LmBinding {
  LmScorer* scorer = nullptr;
  // LM-side tokenizer; may share the ASR vocabulary.
  const Tokenizer* tokenizer = nullptr;
  double weight = 0.0;
  // Whether this LM's score counts in the final selection.
  bool use_in_final = true;
  // Overrides DecodeConfig::policy for this LM.
  std::optional<FusionPolicy> policy;
};

enum class FusionTiming {
  // Score after pruning, when the policy fires.
  kDelayed,
  // Score every candidate before pruning at every step (classic shallow
  // fusion). Requires policy Always.
  kPrePrune,
};

inline constexpr std::size_t kUnlimitedBeam =
    std::numeric_limits<std::size_t>::max();

struct Hypothesis;

struct PruneEvent {
  int step = 0;
  // Per LM, the number of LM scoring events completed before this prune.
  std::vector<std::uint64_t> lm_versions;
  std::span<const Hypothesis> kept;
};

struct DecodeConfig {
  std::size_t beam = 10;
  DecodeMode mode = DecodeMode::kFrameSync;
  FusionPolicy policy = FusionPolicy::ShortestHyp();
  FusionTiming timing = FusionTiming::kDelayed;
  std::vector<LmBinding> lms;
  // Label-sync step bound; 0 derives it from the frame count as
  // min(T + 1, ceil(2 * T / frames_per_token_estimate) + 1).
  int max_label_steps = 0;
  double frames_per_token_estimate = 1.0;
  std::function<void(const PruneEvent&)> on_prune;
};

struct LmTrack {
  // Scored part of the re-tokenized prefix; stale between fusion events.
  PrefixCacheEntry cache;
  // Current tokenizable prefix in LM tokens.
  RetokenizedPrefix retok;
};

struct Hypothesis {
  // ASR ids starting with <s>; label-sync hypotheses that ended carry </s>.
  std::vector<TokenId> tokens{kBosId};
  // Frame-sync CTC state.
  CtcScorePair ctc = kEmptyPrefixPair;
  // E2E log-score: ctc.Total() in frame-sync, accumulated in label-sync.
  double e2e = 0.0;
  std::vector<LmTrack> lm;
  bool ended = false;
};

// e2e + sum of weight * raw LM score over `lms`.
double CombinedScore(const Hypothesis& hyp, std::span<const LmBinding> lms);

// Strict ranking: higher score, then shorter tokens, then smaller ids.
bool RanksBefore(double score_a, std::span<const TokenId> a, double score_b,
                 std::span<const TokenId> b);

// Keeps the top `beam` hypotheses by CombinedScore, sorted best first.
std::vector<Hypothesis> Prune(std::vector<Hypothesis> hyps, std::size_t beam,
                              std::span<const LmBinding> lms);

// Frame-sync extension of `beam` by one frame: every hypothesis stays and
// extends by each regular token; duplicate prefixes merge. Candidates with
// zero probability are dropped. Retokenization state is brought up to date.
std::vector<Hypothesis> ExtendFrameSync(std::span<const Hypothesis> beam,
                                        std::span<const double> frame,
                                        const Tokenizer& asr_tok,
                                        std::span<const LmBinding> lms);

// Label-sync extension: each live hypothesis spawns one child per regular
// token and one ended child for </s>; ended hypotheses pass through.
std::vector<Hypothesis> ExtendLabelSync(std::span<const Hypothesis> beam,
                                        LabelSyncScorer& scorer,
                                        const Tokenizer& asr_tok,
                                        std::span<const LmBinding> lms);

struct LmScoringStats {
  bool called = false;
  std::uint64_t hyps = 0;
  std::uint64_t tokens = 0;
};

// Scores, for LM `lm_index`, the unscored part of every hypothesis's
// tokenizable prefix in a single batch call. Makes no call when nothing is
// pending.
LmScoringStats ApplyLmScores(std::span<Hypothesis> hyps, std::size_t lm_index,
                             const LmBinding& lm);

struct DecodeCounters {
  // Scoring calls during the search loop, summed over LMs.
  std::uint64_t lm_calls = 0;
  // Calls made by finalization (one per LM).
  std::uint64_t lm_final_calls = 0;
  // Hypotheses and LM tokens scored, loop and finalization.
  std::uint64_t hyps_lm_scored = 0;
  std::uint64_t lm_tokens_scored = 0;
  std::uint64_t hyps_expanded = 0;
  int steps = 0;
  double wall_ms = 0.0;
};

struct NBestEntry {
  std::vector<TokenId> tokens;
  std::string text;
  double e2e = 0.0;
  // Raw final LM log-probabilities, </s> included, one per LM.
  std::vector<double> lm_raw;
  // e2e plus the weighted scores of LMs flagged use_in_final.
  double combined = 0.0;
};

struct DecodeResult {
  // Final beam, best first.
  std::vector<NBestEntry> nbest;
  DecodeCounters counters;

  const NBestEntry& best() const { return nbest.front(); }
};

// Scores every hypothesis's full re-tokenized text plus </s> with each LM
// (one call per LM) and ranks by the final combined score.
DecodeResult Finalize(std::vector<Hypothesis> beam, const Tokenizer& asr_tok,
                      std::span<const LmBinding> lms, DecodeCounters counters);

// Dispatches on config.mode: CTC prefix beam search, or label-sync search
// over a CtcLabelSyncScorer built from `emissions`.
DecodeResult Decode(const EmissionMatrix& emissions, const Tokenizer& asr_tok,
                    const DecodeConfig& config);

// Label-synchronous search; `num_frames` sizes the default step bound.
DecodeResult Decode(LabelSyncScorer& scorer, std::size_t num_frames,
                    const Tokenizer& asr_tok, const DecodeConfig& config);

}  // namespace delayfuse

#endif  // DELAYFUSE_DECODER_H_
