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

// The language-model contract consumed by the decoder: batched incremental
// scoring of LM-token sequences over a per-hypothesis prefix cache.

#ifndef DELAYFUSE_LM_SCORER_H_
#define DELAYFUSE_LM_SCORER_H_

#include <atomic>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "delayfuse/tokenization.h"

namespace delayfuse {

class LmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// FNV-1a style chain over token ids. HashTokens(s + [t]) ==
// HashStep(HashTokens(s), t).
inline constexpr std::uint64_t kEmptyTokenHash = 0xcbf29ce484222325ULL;

inline constexpr std::uint64_t HashStep(std::uint64_t h, TokenId token) {
  h ^= static_cast<std::uint32_t>(token);
  h *= 1099511628211ULL;
  h ^= h >> 29;
  return h;
}

inline std::uint64_t HashTokens(std::span<const TokenId> tokens) {
  std::uint64_t h = kEmptyTokenHash;
  for (TokenId t : tokens) h = HashStep(h, t);
  return h;
}

struct TokenSeqHash {
  std::size_t operator()(const std::vector<TokenId>& key) const {
    return static_cast<std::size_t>(HashTokens(key));
  }
};

// What a scorer remembers about the already-scored part of one hypothesis.
// Plays the role of a transformer key-value cache at the score level.
struct PrefixCacheEntry {
  // LM tokens scored after <s>.
  std::size_t scored_len = 0;
  // Log-probability of those tokens given <s>.
  double cum_logprob = 0.0;
  // Scorer-specific resume state (for an n-gram, the last order-1 ids).
  std::vector<TokenId> context{kBosId};
  // HashTokens of the scored sequence, <s> included; detects caches that
  // do not belong to the submitted sequence.
  std::uint64_t prefix_hash = HashStep(kEmptyTokenHash, kBosId);
};

struct ScoreRequest {
  // Full LM-token sequence, starting with <s>.
  std::vector<TokenId> tokens;
  PrefixCacheEntry cache;
};

struct ScoreResult {
  double cum_logprob = 0.0;
  PrefixCacheEntry cache;
};

struct ScorerCounters {
  std::uint64_t calls = 0;
  std::uint64_t hyps_scored = 0;
  std::uint64_t tokens_scored = 0;
};

class LmScorer {
 public:
  virtual ~LmScorer() = default;

  // Scores, for each request, the tokens after cache.scored_len and returns
  // the extended cumulative log-probabilities in request order. Throws
  // LmError when a cache does not describe a prefix of its sequence.
  virtual std::vector<ScoreResult> ScoreBatchIncremental(
      std::span<const ScoreRequest> batch) = 0;

  // From-scratch log-probability of `seq`, which must start with <s>. Does
  // not touch the counters.
  virtual double ScoreSequence(std::span<const TokenId> seq) const = 0;

  virtual ScorerCounters counters() const = 0;
  virtual void Reset() = 0;
};

// Counter block shared by scorer implementations; safe to bump from
// concurrent decodes.
class AtomicScorerCounters {
 public:
  void Record(std::uint64_t hyps, std::uint64_t tokens) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    hyps_.fetch_add(hyps, std::memory_order_relaxed);
    tokens_.fetch_add(tokens, std::memory_order_relaxed);
  }
  ScorerCounters Snapshot() const {
    return {calls_.load(std::memory_order_relaxed),
            hyps_.load(std::memory_order_relaxed),
            tokens_.load(std::memory_order_relaxed)};
  }
  void Clear() {
    calls_ = 0;
    hyps_ = 0;
    tokens_ = 0;
  }

 private:
  std::atomic<std::uint64_t> calls_{0};
  std::atomic<std::uint64_t> hyps_{0};
  std::atomic<std::uint64_t> tokens_{0};
};

}  // namespace delayfuse

#endif  // DELAYFUSE_LM_SCORER_H_
