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

#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "gtest/gtest.h"

#include "delayfuse/corpus.h"
#include "delayfuse/latency_scorer.h"
#include "delayfuse/log_math.h"
#include "delayfuse/ngram_model.h"
#include "delayfuse/rng.h"
#include "oracles.h"
#include "test_util.h"

namespace delayfuse {
namespace {

using testing::MakeVocab;
using testing::Marked;
using testing::TempDir;

struct TrainedLm {
  std::shared_ptr<const Vocabulary> vocab;
  std::vector<std::vector<TokenId>> sentences;
  std::unique_ptr<NGramModel> model;
};

TrainedLm TrainOnSeedCorpus(std::size_t lines, int order, double discount,
                            std::size_t vocab_size = 120) {
  TrainedLm out;
  const auto corpus = GenerateCorpus(lines, 13);
  out.vocab = std::make_shared<const Vocabulary>(BuildVocab(corpus, vocab_size));
  const Tokenizer tok(*out.vocab);
  for (const auto& line : corpus) out.sentences.push_back(tok.Encode(line));
  out.model = TrainNGram(out.sentences, order, discount, out.vocab);
  return out;
}

std::vector<TokenId> RandomLmSequence(Rng* rng, const Vocabulary& vocab,
                                      std::size_t len) {
  std::vector<TokenId> seq = {kBosId};
  for (std::size_t i = 0; i < len; ++i) {
    seq.push_back(kNumSpecialTokens +
                  static_cast<TokenId>(rng->Index(vocab.size() - kNumSpecialTokens)));
  }
  return seq;
}

// Sequence drawn from training sentences so that long contexts are hit.
std::vector<TokenId> SeenSequence(Rng* rng, const TrainedLm& lm) {
  const auto& s = lm.sentences[rng->Index(lm.sentences.size())];
  std::vector<TokenId> seq = {kBosId};
  seq.insert(seq.end(), s.begin(), s.end());
  if (rng->Bernoulli(0.5)) seq.push_back(kEosId);
  return seq;
}

double ContinuationMass(const NGramModel& model,
                        std::span<const TokenId> context) {
  double total = 0.0;
  for (TokenId w = 0; w < static_cast<TokenId>(model.vocab().size()); ++w) {
    if (!model.IsPredictable(w)) continue;
    total += std::exp(model.LogProb(context, w));
  }
  return total;
}

TEST(TrainNGramTest, UnigramFloor) {
  auto vocab =
      std::make_shared<const Vocabulary>(MakeVocab({Marked("a"), Marked("b")}));
  const TokenId a = 4;
  const TokenId b = 5;
  const std::vector<std::vector<TokenId>> corpus = {{a}};
  const auto model = TrainNGram(corpus, 1, 0.5, vocab);
  const std::vector<TokenId> none;
  EXPECT_GT(model->LogProb(none, a), model->LogProb(none, b));
  EXPECT_GT(model->LogProb(none, a), model->LogProb(none, kEosId) - 1e-12);
  EXPECT_TRUE(std::isfinite(model->LogProb(none, b)));
  EXPECT_TRUE(std::isfinite(model->LogProb(none, kUnkId)));
  EXPECT_NEAR(ContinuationMass(*model, none), 1.0, 1e-9);
}

TEST(TrainNGramTest, BigramPrefersObservedFollower) {
  auto vocab = std::make_shared<const Vocabulary>(
      MakeVocab({Marked("a"), Marked("b"), Marked("c")}));
  const TokenId a = 4, b = 5, c = 6;
  const std::vector<std::vector<TokenId>> corpus = {
      {a, b}, {a, b, c}, {c, a, b}, {c}, {b, c}};
  const auto model = TrainNGram(corpus, 2, 0.4, vocab);
  const std::vector<TokenId> ctx = {a};
  const std::vector<TokenId> none;
  EXPECT_GT(model->LogProb(ctx, b), model->LogProb(none, b));
  for (TokenId w : {a, c, kEosId, kUnkId}) {
    EXPECT_GT(model->LogProb(ctx, b), model->LogProb(ctx, w));
  }
}

TEST(TrainNGramTest, Errors) {
  auto vocab = std::make_shared<const Vocabulary>(MakeVocab({Marked("a")}));
  const std::vector<std::vector<TokenId>> empty;
  const std::vector<std::vector<TokenId>> ok = {{4}};
  EXPECT_THROW(TrainNGram(empty, 2, 0.4, vocab), LmError);
  EXPECT_THROW(TrainNGram(ok, 0, 0.4, vocab), LmError);
  EXPECT_THROW(TrainNGram(ok, 6, 0.4, vocab), LmError);
  EXPECT_THROW(TrainNGram(ok, 2, 0.0, vocab), LmError);
  EXPECT_THROW(TrainNGram(ok, 2, 1.0, vocab), LmError);
  EXPECT_THROW(TrainNGram(ok, 2, 0.4, nullptr), LmError);
  const std::vector<std::vector<TokenId>> bad = {{kBosId}};
  EXPECT_THROW(TrainNGram(bad, 2, 0.4, vocab), LmError);
  const std::vector<std::vector<TokenId>> out_of_range = {{99}};
  EXPECT_THROW(TrainNGram(out_of_range, 2, 0.4, vocab), LmError);
}

TEST(TrainNGramTest, StoredValuesFiniteAndNonPositive) {
  const auto lm = TrainOnSeedCorpus(300, 3, 0.4);
  for (std::size_t k = 0; k < lm.model->grams().size(); ++k) {
    for (const auto& [gram, entry] : lm.model->grams()[k]) {
      if (k == 0 && gram[0] == kBosId) continue;
      EXPECT_TRUE(std::isfinite(entry.log_prob));
      EXPECT_LE(entry.log_prob, 0.0);
    }
  }
}

TEST(TrainNGramTest, ContextsNormalize) {
  const auto lm = TrainOnSeedCorpus(500, 3, 0.4);
  Rng rng(17);
  const std::size_t v = lm.vocab->size();
  for (int i = 0; i < 100; ++i) {
    std::vector<TokenId> ctx;
    if (i % 2 == 0) {
      // A context seen in training.
      const auto seq = SeenSequence(&rng, lm);
      const std::size_t end = 1 + rng.Index(seq.size() - 1);
      const std::size_t len = std::min<std::size_t>(2, end);
      ctx.assign(seq.begin() + (end - len), seq.begin() + end);
    } else {
      const auto seq = RandomLmSequence(&rng, *lm.vocab, 2);
      ctx.assign(seq.begin() + 1, seq.end());
      if (rng.Bernoulli(0.3)) ctx.front() = kBosId;
    }
    EXPECT_NEAR(ContinuationMass(*lm.model, ctx), 1.0, 1e-6);
  }
  EXPECT_NEAR(ContinuationMass(*lm.model, std::vector<TokenId>{}), 1.0, 1e-6);
  EXPECT_GT(v, 0u);
}

TEST(TrainNGramTest, MatchesReferenceImplementation) {
  for (int order : {1, 2, 3, 4}) {
    const auto lm = TrainOnSeedCorpus(200, order, 0.4, 90);
    const oracle::ReferenceNGram ref(lm.sentences, order, 0.4, lm.vocab->size());
    Rng rng(order * 7 + 1);
    for (int i = 0; i < 30; ++i) {
      const auto seq = i % 2 == 0 ? SeenSequence(&rng, lm)
                                  : RandomLmSequence(&rng, *lm.vocab, 12);
      EXPECT_NEAR(lm.model->ScoreSequence(seq), ref.ScoreSequence(seq), 1e-9)
          << "order " << order;
    }
  }
}

TEST(ScoreSequenceTest, Basics) {
  const auto lm = TrainOnSeedCorpus(200, 3, 0.4);
  EXPECT_EQ(lm.model->ScoreSequence(std::vector<TokenId>{kBosId}), 0.0);
  EXPECT_THROW(lm.model->ScoreSequence(std::vector<TokenId>{}), LmError);
  EXPECT_THROW(lm.model->ScoreSequence(std::vector<TokenId>{5, 6}), LmError);
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto seq = SeenSequence(&rng, lm);
    double chain = 0.0;
    for (std::size_t j = 1; j < seq.size(); ++j) {
      chain += lm.model->LogProb(std::span(seq).first(j), seq[j]);
    }
    EXPECT_NEAR(lm.model->ScoreSequence(seq), chain, 1e-12);
    EXPECT_LE(lm.model->ScoreSequence(seq), 0.0);
  }
}

TEST(ScoreBatchTest, EmptyCacheEqualsScoreSequence) {
  const auto lm = TrainOnSeedCorpus(200, 3, 0.4);
  Rng rng(3);
  const auto seq = RandomLmSequence(&rng, *lm.vocab, 9);
  const std::vector<ScoreRequest> batch = {{seq, PrefixCacheEntry{}}};
  const auto results = lm.model->ScoreBatchIncremental(batch);
  ASSERT_EQ(results.size(), 1u);
  EXPECT_NEAR(results[0].cum_logprob, lm.model->ScoreSequence(seq), 1e-9);
  EXPECT_EQ(results[0].cache.scored_len, 9u);
  EXPECT_EQ(results[0].cache.prefix_hash, HashTokens(seq));
}

TEST(ScoreBatchTest, FullyScoredRequestsAreUnchanged) {
  const auto lm = TrainOnSeedCorpus(200, 3, 0.4);
  Rng rng(4);
  std::vector<ScoreRequest> batch;
  for (int i = 0; i < 4; ++i) {
    batch.push_back({RandomLmSequence(&rng, *lm.vocab, 5 + i), {}});
  }
  const auto first = lm.model->ScoreBatchIncremental(batch);
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i].cache = first[i].cache;
  lm.model->Reset();
  const auto second = lm.model->ScoreBatchIncremental(batch);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    EXPECT_EQ(second[i].cum_logprob, first[i].cum_logprob);
    EXPECT_EQ(second[i].cache.scored_len, first[i].cache.scored_len);
  }
  const auto c = lm.model->counters();
  EXPECT_EQ(c.calls, 1u);
  EXPECT_EQ(c.tokens_scored, 0u);
  EXPECT_EQ(c.hyps_scored, 0u);
}

TEST(ScoreBatchTest, ThreeRoundsMatchOnePass) {
  const auto lm = TrainOnSeedCorpus(300, 3, 0.4);
  Rng rng(5);
  std::vector<std::vector<TokenId>> seqs;
  for (int i = 0; i < 6; ++i) seqs.push_back(RandomLmSequence(&rng, *lm.vocab, 12));
  std::vector<PrefixCacheEntry> caches(6);
  std::vector<double> previous(6, 0.0);
  lm.model->Reset();
  for (std::size_t round = 1; round <= 3; ++round) {
    std::vector<ScoreRequest> batch;
    for (std::size_t i = 0; i < 6; ++i) {
      const std::size_t len = 1 + round * 4;
      batch.push_back({std::vector<TokenId>(seqs[i].begin(),
                                            seqs[i].begin() + len),
                       caches[i]});
    }
    const auto results = lm.model->ScoreBatchIncremental(batch);
    for (std::size_t i = 0; i < 6; ++i) {
      EXPECT_LE(results[i].cum_logprob, previous[i]);
      EXPECT_GE(results[i].cache.scored_len, caches[i].scored_len);
      previous[i] = results[i].cum_logprob;
      caches[i] = results[i].cache;
    }
  }
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_NEAR(caches[i].cum_logprob, lm.model->ScoreSequence(seqs[i]), 1e-9);
  }
  const auto c = lm.model->counters();
  EXPECT_EQ(c.calls, 3u);
  EXPECT_EQ(c.hyps_scored, 18u);
  EXPECT_EQ(c.tokens_scored, 6u * 12u);
}

TEST(ScoreBatchTest, RandomPartitionsAreExact) {
  const auto lm = TrainOnSeedCorpus(300, 4, 0.4);
  Rng rng(6);
  for (int h = 0; h < 100; ++h) {
    const auto seq = h % 2 == 0 ? SeenSequence(&rng, lm)
                                : RandomLmSequence(&rng, *lm.vocab, 1 + rng.Index(20));
    PrefixCacheEntry cache;
    std::size_t tokens = 0;
    lm.model->Reset();
    while (cache.scored_len + 1 < seq.size()) {
      const std::size_t remaining = seq.size() - 1 - cache.scored_len;
      const std::size_t step = rng.Index(remaining + 1);
      const std::size_t len = cache.scored_len + 1 + step;
      const std::vector<ScoreRequest> batch = {
          {std::vector<TokenId>(seq.begin(), seq.begin() + len), cache}};
      cache = lm.model->ScoreBatchIncremental(batch)[0].cache;
      tokens += step;
    }
    EXPECT_NEAR(cache.cum_logprob, lm.model->ScoreSequence(seq), 1e-9);
    EXPECT_EQ(lm.model->counters().tokens_scored, cache.scored_len);
    EXPECT_EQ(tokens, cache.scored_len);
  }
}

TEST(ScoreBatchTest, RejectsForeignCache) {
  const auto lm = TrainOnSeedCorpus(200, 3, 0.4);
  Rng rng(7);
  const auto a = RandomLmSequence(&rng, *lm.vocab, 6);
  auto b = a;
  b[2] = b[2] == 5 ? 6 : 5;
  const std::vector<ScoreRequest> first = {{a, {}}};
  const auto cache = lm.model->ScoreBatchIncremental(first)[0].cache;
  const std::vector<ScoreRequest> foreign = {{b, cache}};
  EXPECT_THROW(lm.model->ScoreBatchIncremental(foreign), LmError);
  const std::vector<ScoreRequest> shorter = {
      {std::vector<TokenId>(a.begin(), a.begin() + 3), cache}};
  EXPECT_THROW(lm.model->ScoreBatchIncremental(shorter), LmError);
  const std::vector<ScoreRequest> no_bos = {{{5, 6}, {}}};
  EXPECT_THROW(lm.model->ScoreBatchIncremental(no_bos), LmError);
}

TEST(ScoreBatchTest, ResultsInRequestOrder) {
  const auto lm = TrainOnSeedCorpus(200, 3, 0.4);
  Rng rng(8);
  std::vector<ScoreRequest> batch;
  for (int i = 0; i < 5; ++i) {
    batch.push_back({RandomLmSequence(&rng, *lm.vocab, 3 + i), {}});
  }
  const auto results = lm.model->ScoreBatchIncremental(batch);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    EXPECT_EQ(results[i].cache.scored_len, batch[i].tokens.size() - 1);
    EXPECT_NEAR(results[i].cum_logprob,
                lm.model->ScoreSequence(batch[i].tokens), 1e-9);
  }
}

TEST(ArpaTest, RoundTripScoresMatch) {
  TempDir dir("arpa_rt");
  const auto lm = TrainOnSeedCorpus(500, 3, 0.4);
  WriteArpa(*lm.model, dir.File("lm.arpa"));
  const auto loaded = ReadArpa(dir.File("lm.arpa"), lm.vocab);
  EXPECT_EQ(loaded->order(), 3);
  Rng rng(9);
  double max_delta = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto seq = i % 2 == 0 ? SeenSequence(&rng, lm)
                                : RandomLmSequence(&rng, *lm.vocab, 10);
    max_delta = std::max(max_delta, std::abs(loaded->ScoreSequence(seq) -
                                             lm.model->ScoreSequence(seq)));
  }
  EXPECT_LT(max_delta, 1e-9);
}

TEST(ArpaTest, WriteIsDeterministic) {
  TempDir dir("arpa_det");
  const auto lm = TrainOnSeedCorpus(100, 2, 0.4);
  WriteArpa(*lm.model, dir.File("a.arpa"));
  WriteArpa(*TrainOnSeedCorpus(100, 2, 0.4).model, dir.File("b.arpa"));
  auto slurp = [](const std::string& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(slurp(dir.File("a.arpa")), slurp(dir.File("b.arpa")));
}

class ArpaErrorTest : public ::testing::Test {
 protected:
  std::string Write(const std::string& body) {
    const auto path = dir_.File("bad.arpa");
    std::ofstream(path) << body;
    return path;
  }
  std::string ReadError(const std::string& body) {
    try {
      ReadArpa(Write(body), vocab_);
    } catch (const LmError& e) {
      return e.what();
    }
    return "";
  }

  TempDir dir_{"arpa_err"};
  std::shared_ptr<const Vocabulary> vocab_ =
      std::make_shared<const Vocabulary>(MakeVocab({Marked("a")}));
};

TEST_F(ArpaErrorTest, EmptyUnigramSection) {
  const auto msg = ReadError(
      "\\data\\\nngram 1=0\n\n\\1-grams:\n\n\\end\\\n");
  EXPECT_NE(msg.find("1-grams"), std::string::npos) << msg;
}

TEST_F(ArpaErrorTest, CountMismatchNamesOrder) {
  const auto msg = ReadError(
      "\\data\\\nngram 1=2\nngram 2=3\n\n\\1-grams:\n"
      "-1\t</s>\t0\n-1\t\xE2\x96\x81" "a\t0\n\n\\2-grams:\n"
      "-0.5\t<s> \xE2\x96\x81" "a\n\n\\end\\\n");
  EXPECT_NE(msg.find("2-grams"), std::string::npos) << msg;
  EXPECT_NE(msg.find("declares 3"), std::string::npos) << msg;
}

TEST_F(ArpaErrorTest, MalformedInputs) {
  EXPECT_NE(ReadError("no header\n"), "");
  EXPECT_NE(ReadError("\\data\\\nngram 1=1\n\n\\1-grams:\n-1\t</s>\n"), "");
  EXPECT_NE(ReadError("\\data\\\nngram 1=1\n\n\\1-grams:\n-1\tzzz\n\\end\\\n"),
            "");
  EXPECT_NE(ReadError("\\data\\\nngram 1=1\n\n\\1-grams:\nx\t</s>\n\\end\\\n"),
            "");
  EXPECT_NE(ReadError("\\data\\\nngram 2=1\n\n\\end\\\n"), "");
  EXPECT_THROW(ReadArpa(dir_.File("missing.arpa"), vocab_), LmError);
}

TEST(LatencyScorerTest, SleepsPerCall) {
  auto lm = TrainOnSeedCorpus(100, 2, 0.4);
  std::shared_ptr<LmScorer> inner(std::move(lm.model));
  auto wrapped = WrapWithLatency(inner, Millis(10), Millis(0));
  Rng rng(10);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 7; ++i) {
    const std::vector<ScoreRequest> batch = {
        {RandomLmSequence(&rng, *lm.vocab, 4), {}}};
    wrapped->ScoreBatchIncremental(batch);
  }
  const Millis elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_GE(elapsed.count(), 70.0);
  EXPECT_GE(wrapped->emulated_time().count(), 70.0);
  EXPECT_EQ(inner->counters().calls, 7u);
  EXPECT_EQ(wrapped->counters().tokens_scored, 28u);
}

TEST(LatencyScorerTest, ZeroCostDelegates) {
  auto lm = TrainOnSeedCorpus(100, 2, 0.4);
  std::shared_ptr<LmScorer> inner(std::move(lm.model));
  auto wrapped = WrapWithLatency(inner, Millis(0), Millis(0));
  Rng rng(11);
  const auto seq = RandomLmSequence(&rng, *lm.vocab, 8);
  const std::vector<ScoreRequest> batch = {{seq, {}}};
  EXPECT_EQ(wrapped->ScoreBatchIncremental(batch)[0].cum_logprob,
            inner->ScoreSequence(seq));
  EXPECT_EQ(wrapped->ScoreSequence(seq), inner->ScoreSequence(seq));
  EXPECT_EQ(wrapped->emulated_time().count(), 0.0);
  wrapped->Reset();
  EXPECT_EQ(inner->counters().calls, 0u);
}

TEST(LatencyScorerTest, PerTokenCostAndErrors) {
  auto lm = TrainOnSeedCorpus(100, 2, 0.4);
  std::shared_ptr<LmScorer> inner(std::move(lm.model));
  auto wrapped = WrapWithLatency(inner, Millis(0), Millis(2));
  Rng rng(12);
  const std::vector<ScoreRequest> batch = {
      {RandomLmSequence(&rng, *lm.vocab, 10), {}}};
  wrapped->ScoreBatchIncremental(batch);
  EXPECT_GE(wrapped->emulated_time().count(), 20.0);
  EXPECT_THROW(WrapWithLatency(inner, Millis(-1), Millis(0)), LmError);
  EXPECT_THROW(WrapWithLatency(nullptr, Millis(0), Millis(0)), LmError);
}

TEST(HashTest, StepChainsMatchWholeHash) {
  Rng rng(13);
  std::vector<TokenId> seq;
  std::uint64_t h = kEmptyTokenHash;
  for (int i = 0; i < 50; ++i) {
    const TokenId t = static_cast<TokenId>(rng.Index(1000));
    seq.push_back(t);
    h = HashStep(h, t);
    EXPECT_EQ(h, HashTokens(seq));
  }
}

}  // namespace
}  // namespace delayfuse
