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

#ifndef DELAYFUSE_NGRAM_MODEL_H_
#define DELAYFUSE_NGRAM_MODEL_H_

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "delayfuse/lm_scorer.h"
#include "delayfuse/tokenization.h"

namespace delayfuse {

using NGramHash = TokenSeqHash;

// Backoff n-gram model over an LM vocabulary. Predictable words are every id
// except the blank placeholder and <s>. Log-probabilities are natural logs.
class NGramModel : public LmScorer {
 public:
  struct Entry {
    double log_prob = 0.0;
    double backoff = 0.0;
  };
  // grams[k] maps (k+1)-grams to their entry.
  using Table = std::unordered_map<std::vector<TokenId>, Entry, NGramHash>;

  NGramModel(int order, std::shared_ptr<const Vocabulary> vocab,
             std::vector<Table> grams);

  int order() const { return order_; }
  const Vocabulary& vocab() const { return *vocab_; }
  std::shared_ptr<const Vocabulary> shared_vocab() const { return vocab_; }
  const std::vector<Table>& grams() const { return grams_; }

  bool IsPredictable(TokenId id) const {
    return vocab_->IsValid(id) && id != kBlankId && id != kBosId;
  }

  // log P(word | context); only the last order-1 context ids matter.
  double LogProb(std::span<const TokenId> context, TokenId word) const;

  std::vector<ScoreResult> ScoreBatchIncremental(
      std::span<const ScoreRequest> batch) override;
  double ScoreSequence(std::span<const TokenId> seq) const override;
  ScorerCounters counters() const override { return counters_.Snapshot(); }
  void Reset() override { counters_.Clear(); }

 private:
  int order_;
  std::shared_ptr<const Vocabulary> vocab_;
  std::vector<Table> grams_;
  AtomicScorerCounters counters_;
};

// Absolute-discounting backoff model. `corpus` holds LM-token sentences
// without <s>/</s>; both are added. The unigram distribution interpolates the
// discounted counts with a uniform floor over predictable words, so every
// word has finite probability. Requires 1 <= order <= 5 and 0 < discount < 1.
std::unique_ptr<NGramModel> TrainNGram(
    std::span<const std::vector<TokenId>> corpus, int order, double discount,
    std::shared_ptr<const Vocabulary> vocab);

// ARPA text format; probabilities are written as log10.
void WriteArpa(const NGramModel& model, const std::string& path);
std::unique_ptr<NGramModel> ReadArpa(const std::string& path,
                                     std::shared_ptr<const Vocabulary> vocab);

}  // namespace delayfuse

#endif  // DELAYFUSE_NGRAM_MODEL_H_
