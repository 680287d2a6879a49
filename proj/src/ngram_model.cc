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

#include "delayfuse/ngram_model.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include "delayfuse/log_math.h"

namespace delayfuse {

namespace {

// Walks the backoff chain over `grams`, using at most grams.size()-1 context
// ids. Returns kLogZero if the word has no unigram entry.
double BackoffLogProb(std::span<const NGramModel::Table> grams,
                      std::span<const TokenId> context, TokenId word) {
  const std::size_t max_ctx = std::min(context.size(), grams.size() - 1);
  std::vector<TokenId> key;
  key.reserve(max_ctx + 1);
  double backoff = 0.0;
  for (std::size_t len = max_ctx;; --len) {
    const auto ctx = context.last(len);
    key.assign(ctx.begin(), ctx.end());
    key.push_back(word);
    const auto& table = grams[len];
    if (auto it = table.find(key); it != table.end()) {
      return backoff + it->second.log_prob;
    }
    if (len == 0) break;
    key.pop_back();
    const auto& ctx_table = grams[len - 1];
    if (auto it = ctx_table.find(key); it != ctx_table.end()) {
      backoff += it->second.backoff;
    }
  }
  return kLogZero;
}

void PushContext(std::vector<TokenId>* context, TokenId token,
                 std::size_t keep) {
  context->push_back(token);
  if (context->size() > keep) {
    context->erase(context->begin(),
                   context->begin() + (context->size() - keep));
  }
}

}  // namespace

NGramModel::NGramModel(int order, std::shared_ptr<const Vocabulary> vocab,
                       std::vector<Table> grams)
    : order_(order), vocab_(std::move(vocab)), grams_(std::move(grams)) {
  if (order_ < 1 || grams_.size() != static_cast<std::size_t>(order_)) {
    throw LmError("n-gram tables do not match order " + std::to_string(order_));
  }
  if (!vocab_) throw LmError("n-gram model needs a vocabulary");
}

double NGramModel::LogProb(std::span<const TokenId> context,
                           TokenId word) const {
  if (!IsPredictable(word)) {
    throw LmError("token id " + std::to_string(word) + " cannot be predicted");
  }
  double lp = BackoffLogProb(grams_, context, word);
  if (IsLogZero(lp) && word != kUnkId) lp = BackoffLogProb(grams_, context, kUnkId);
  if (IsLogZero(lp)) {
    throw LmError("token '" + vocab_->token(word) +
                  "' has no unigram entry and there is no <unk> entry");
  }
  return lp;
}

double NGramModel::ScoreSequence(std::span<const TokenId> seq) const {
  if (seq.empty() || seq.front() != kBosId) {
    throw LmError("scored sequence must start with <s>");
  }
  const std::size_t history = static_cast<std::size_t>(order_ - 1);
  double total = 0.0;
  for (std::size_t i = 1; i < seq.size(); ++i) {
    const std::size_t len = std::min(history, i);
    total += LogProb(seq.subspan(i - len, len), seq[i]);
  }
  return total;
}

std::vector<ScoreResult> NGramModel::ScoreBatchIncremental(
    std::span<const ScoreRequest> batch) {
  const std::size_t history = static_cast<std::size_t>(order_ - 1);
  std::vector<ScoreResult> results;
  results.reserve(batch.size());
  std::uint64_t hyps = 0;
  std::uint64_t tokens = 0;
  for (const auto& request : batch) {
    const auto& seq = request.tokens;
    const auto& cache = request.cache;
    if (seq.empty() || seq.front() != kBosId) {
      throw LmError("scored sequence must start with <s>");
    }
    if (cache.scored_len + 1 > seq.size()) {
      throw LmError("cache covers " + std::to_string(cache.scored_len) +
                    " tokens but the sequence has only " +
                    std::to_string(seq.size() - 1));
    }
    const std::span<const TokenId> scored(seq.data(), cache.scored_len + 1);
    if (HashTokens(scored) != cache.prefix_hash ||
        cache.context.size() > scored.size() ||
        !std::equal(cache.context.begin(), cache.context.end(),
                    scored.end() - cache.context.size())) {
      throw LmError("cached prefix is not a prefix of the submitted sequence");
    }

    ScoreResult result{cache.cum_logprob, cache};
    auto& next = result.cache;
    if (next.context.size() > history) {
      next.context.erase(next.context.begin(),
                         next.context.end() - history);
    }
    for (std::size_t i = cache.scored_len + 1; i < seq.size(); ++i) {
      result.cum_logprob += LogProb(next.context, seq[i]);
      PushContext(&next.context, seq[i], history);
      next.prefix_hash = HashStep(next.prefix_hash, seq[i]);
    }
    const std::size_t fresh = seq.size() - 1 - cache.scored_len;
    next.scored_len = seq.size() - 1;
    next.cum_logprob = result.cum_logprob;
    if (fresh > 0) ++hyps;
    tokens += fresh;
    results.push_back(std::move(result));
  }
  counters_.Record(hyps, tokens);
  return results;
}

// ---------------------------------------------------------------------------
// Training

std::unique_ptr<NGramModel> TrainNGram(
    std::span<const std::vector<TokenId>> corpus, int order, double discount,
    std::shared_ptr<const Vocabulary> vocab) {
  if (corpus.empty()) throw LmError("empty training corpus");
  if (order < 1 || order > 5) {
    throw LmError("order must be in [1, 5], got " + std::to_string(order));
  }
  if (!(discount > 0.0 && discount < 1.0)) {
    throw LmError("discount must be in (0, 1)");
  }
  if (!vocab) throw LmError("n-gram model needs a vocabulary");
  const std::size_t num_predictable = vocab->size() - 2;

  using CountTable =
      std::unordered_map<std::vector<TokenId>, std::size_t, NGramHash>;
  std::vector<CountTable> counts(order);
  std::vector<TokenId> seq;
  for (const auto& sentence : corpus) {
    seq.assign(1, kBosId);
    for (TokenId id : sentence) {
      if (!vocab->IsValid(id) || id == kBlankId || id == kBosId ||
          id == kEosId) {
        throw LmError("invalid token id " + std::to_string(id) +
                      " in training sentence");
      }
      seq.push_back(id);
    }
    seq.push_back(kEosId);
    for (std::size_t i = 1; i < seq.size(); ++i) {
      for (std::size_t k = 0; k < static_cast<std::size_t>(order) && k <= i;
           ++k) {
        ++counts[k][std::vector<TokenId>(seq.begin() + (i - k),
                                         seq.begin() + (i + 1))];
      }
    }
  }

  std::vector<NGramModel::Table> grams(order);

  // Unigrams: discounted counts plus the freed mass spread uniformly.
  std::size_t total = 0;
  for (const auto& [gram, c] : counts[0]) total += c;
  const double n = static_cast<double>(total);
  const double floor_mass =
      discount * static_cast<double>(counts[0].size()) / n;
  for (TokenId id = 0; id < static_cast<TokenId>(vocab->size()); ++id) {
    if (id == kBlankId) continue;
    if (id == kBosId) {
      grams[0][{kBosId}] = {kLogZero, 0.0};
      continue;
    }
    auto it = counts[0].find({id});
    const double c = it == counts[0].end() ? 0.0 : static_cast<double>(it->second);
    const double p = std::max(c - discount, 0.0) / n +
                     floor_mass / static_cast<double>(num_predictable);
    grams[0][{id}] = {std::log(p), 0.0};
  }

  for (int k = 1; k < order; ++k) {
    struct ContextStats {
      std::size_t total = 0;
      std::vector<std::pair<TokenId, std::size_t>> followers;
    };
    // Ordered map keeps training deterministic regardless of hash layout.
    std::map<std::vector<TokenId>, ContextStats> contexts;
    for (const auto& [gram, c] : counts[k]) {
      auto& stats =
          contexts[std::vector<TokenId>(gram.begin(), gram.end() - 1)];
      stats.total += c;
      stats.followers.emplace_back(gram.back(), c);
    }
    const std::span<const NGramModel::Table> lower(grams.data(), k);
    for (auto& [ctx, stats] : contexts) {
      std::sort(stats.followers.begin(), stats.followers.end());
      const double ctx_total = static_cast<double>(stats.total);
      const std::span<const TokenId> shorter(ctx.data() + 1, ctx.size() - 1);
      double seen_lower = 0.0;
      for (const auto& [w, c] : stats.followers) {
        seen_lower += std::exp(BackoffLogProb(lower, shorter, w));
      }
      const double freed = 1.0 - seen_lower;
      // Every predictable word seen after ctx: nothing to back off to.
      const bool saturated = freed <= 1e-12;
      std::vector<TokenId> key = ctx;
      key.push_back(0);
      for (const auto& [w, c] : stats.followers) {
        key.back() = w;
        const double p = saturated
                             ? static_cast<double>(c) / ctx_total
                             : (static_cast<double>(c) - discount) / ctx_total;
        grams[k][key] = {std::log(p), 0.0};
      }
      const double gamma =
          discount * static_cast<double>(stats.followers.size()) / ctx_total;
      auto ctx_it = grams[k - 1].find(ctx);
      if (ctx_it == grams[k - 1].end()) {
        throw LmError("internal: context missing from lower-order table");
      }
      ctx_it->second.backoff = saturated ? kLogZero : std::log(gamma / freed);
    }
  }
  return std::make_unique<NGramModel>(order, std::move(vocab),
                                      std::move(grams));
}

}  // namespace delayfuse
