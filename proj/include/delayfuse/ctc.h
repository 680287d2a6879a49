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

// CTC prefix scoring: the frame-synchronous prefix recursion, a
// label-synchronous scorer built on CTC prefix probabilities, and exhaustive
// path-enumeration oracles.

#ifndef DELAYFUSE_CTC_H_
#define DELAYFUSE_CTC_H_

#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "delayfuse/emissions.h"
#include "delayfuse/lm_scorer.h"
#include "delayfuse/log_math.h"
#include "delayfuse/tokenization.h"

namespace delayfuse {

// Log-probabilities of the alignment paths of a prefix that end in blank and
// in a non-blank label.
struct CtcScorePair {
  double blank = kLogZero;
  double nonblank = kLogZero;

  double Total() const { return LogAdd(blank, nonblank); }

  // Adds the paths of `other` (prefix merging).
  void Merge(const CtcScorePair& other) {
    blank = LogAdd(blank, other.blank);
    nonblank = LogAdd(nonblank, other.nonblank);
  }
};

// The empty prefix before the first frame.
inline constexpr CtcScorePair kEmptyPrefixPair{0.0, kLogZero};

// One frame of the CTC prefix recursion for prefix h with last label
// `last_label` (nullopt for the empty prefix).
//   new_label == nullopt: h stays h (blank, or a repeat of the last label).
//   new_label == c:       h becomes h + c; when c repeats the last label
//                         only blank-ending paths may extend.
// Labels may be any non-blank column of `frame`; throws AcousticError
// otherwise.
CtcScorePair CtcStepExtend(const CtcScorePair& pair,
                           std::span<const double> frame,
                           std::optional<TokenId> last_label,
                           std::optional<TokenId> new_label);

// log P(collapse(path) == labels), by iterating CtcStepExtend over frames.
double CtcSequenceLogProb(const EmissionMatrix& emissions,
                          std::span<const TokenId> labels);

// log P(collapse(path) starts with prefix), by iterating CtcStepExtend.
double CtcPrefixLogProb(const EmissionMatrix& emissions,
                        std::span<const TokenId> prefix);

// Path-enumeration oracles; exact, exponential. Throw AcousticError beyond
// 12 frames or 8 columns.
double BruteForceCtc(const EmissionMatrix& emissions,
                     std::span<const TokenId> labels);
double BruteForceCtcPrefix(const EmissionMatrix& emissions,
                           std::span<const TokenId> prefix);

// Next-token scores for label-synchronous decoding.
class LabelSyncScorer {
 public:
  virtual ~LabelSyncScorer() = default;

  // Log-scores over the ASR vocabulary for extending `prefix` (no <s>, no
  // blanks). Blank, <s> and <unk> are kLogZero; </s> scores ending here.
  virtual std::vector<double> NextScores(std::span<const TokenId> prefix) = 0;

  virtual std::size_t vocab_size() const = 0;
};

// LabelSyncScorer from emissions: extending h by c scores
// log P_prefix(h + c) - log P_prefix(h); </s> scores
// log P(h) - log P_prefix(h). Along a finished hypothesis the scores
// telescope to its CTC log-probability. Per-prefix trellises are memoized,
// so one instance serves one utterance.
class CtcLabelSyncScorer : public LabelSyncScorer {
 public:
  explicit CtcLabelSyncScorer(const EmissionMatrix& emissions);

  std::vector<double> NextScores(std::span<const TokenId> prefix) override;
  std::size_t vocab_size() const override { return emissions_.vocab_size(); }

  // log P_prefix(prefix).
  double PrefixLogProb(std::span<const TokenId> prefix);

 private:
  struct Trellis {
    // pairs[t]: paths over the first t frames that collapse to the prefix.
    std::vector<CtcScorePair> pairs;
    double prefix_log_prob = 0.0;
  };
  std::shared_ptr<const Trellis> Get(std::span<const TokenId> prefix);

  const EmissionMatrix& emissions_;
  std::unordered_map<std::vector<TokenId>, std::shared_ptr<const Trellis>,
                     TokenSeqHash>
      memo_;
};

// Single-candidate form of CtcLabelSyncScorer::NextScores.
double CtcLabelSyncScore(const EmissionMatrix& emissions,
                         std::span<const TokenId> prefix, TokenId candidate);

}  // namespace delayfuse

#endif  // DELAYFUSE_CTC_H_
