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

#include "delayfuse/tokenization.h"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gtest/gtest.h"

#include "delayfuse/corpus.h"
#include "delayfuse/rng.h"
#include "test_util.h"

namespace delayfuse {
namespace {

using testing::MakeVocab;
using testing::Marked;
using testing::TempDir;

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> Corpus200() { return GenerateCorpus(200, 11); }

// "hello world" pieces plus a few more.
Tokenizer HelloTokenizer() {
  return Tokenizer(MakeVocab({Marked("he"), "llo", Marked("wor"), "ld",
                              Marked("h"), "e", "l", "o", Marked("w"), "r",
                              "d", Marked("a"), Marked("b"), Marked("c")}));
}

TEST(VocabularyTest, RejectsWrongSpecials) {
  EXPECT_THROW(Vocabulary({"<blank>", "<s>", "<unk>", "</s>"}),
               TokenizationError);
  EXPECT_THROW(Vocabulary({"<blank>", "<s>"}), TokenizationError);
}

TEST(VocabularyTest, RejectsDuplicatesAndMidTokenMarker) {
  EXPECT_THROW(MakeVocab({"a", "a"}), TokenizationError);
  EXPECT_THROW(MakeVocab({"a" + Marked("b")}), TokenizationError);
  EXPECT_THROW(MakeVocab({""}), TokenizationError);
}

TEST(VocabularyTest, LmPlaceholderOnBlankLine) {
  Vocabulary v({"<placeholder>", "<s>", "</s>", "<unk>", Marked("a")});
  EXPECT_EQ(v.size(), 5u);
  EXPECT_TRUE(v.IsWordBegin(4));
}

TEST(VocabularyTest, LookupAndIds) {
  const auto v = MakeVocab({Marked("ab"), "c"});
  EXPECT_EQ(v.Find(Marked("ab")), 4);
  EXPECT_EQ(v.Find("zz"), kUnkId);
  EXPECT_TRUE(v.Contains("c"));
  EXPECT_FALSE(v.Contains("zz"));
  EXPECT_TRUE(v.IsSpecial(kEosId));
  EXPECT_FALSE(v.IsSpecial(4));
  EXPECT_TRUE(v.IsWordBegin(4));
  EXPECT_FALSE(v.IsWordBegin(5));
  EXPECT_THROW(v.token(6), TokenizationError);
  EXPECT_THROW(v.token(-1), TokenizationError);
  EXPECT_EQ(v.max_token_chars(), 3u);
}

TEST(VocabularyTest, SaveLoadRoundTrip) {
  TempDir dir("vocab_io");
  const auto v = MakeVocab({Marked("ab"), "c", Marked("é")});
  v.Save(dir.File("v.txt"));
  EXPECT_EQ(Vocabulary::Load(dir.File("v.txt")), v);
  EXPECT_THROW(Vocabulary::Load(dir.File("missing.txt")), TokenizationError);
}

TEST(BuildVocabTest, SingleLetterCorpus) {
  const std::vector<std::string> corpus = {"a a a"};
  const auto v = BuildVocab(corpus, 8);
  EXPECT_TRUE(v.Contains(Marked("a")));
  EXPECT_TRUE(v.Contains("<s>"));
  EXPECT_TRUE(v.Contains("</s>"));
  EXPECT_TRUE(v.Contains("<unk>"));
  EXPECT_LE(v.size(), 8u);
}

TEST(BuildVocabTest, ByteIdenticalFiles) {
  TempDir dir("vocab_det");
  const auto corpus = Corpus200();
  BuildVocab(corpus, 64).Save(dir.File("a.txt"));
  BuildVocab(corpus, 64).Save(dir.File("b.txt"));
  EXPECT_EQ(ReadFile(dir.File("a.txt")), ReadFile(dir.File("b.txt")));
}

TEST(BuildVocabTest, SeedCorpusHasNoUnknowns) {
  const auto corpus = Corpus200();
  const Tokenizer tok(BuildVocab(corpus, 64));
  EXPECT_LE(tok.vocab().size(), 64u);
  for (const auto& line : corpus) {
    for (auto word : SplitWords(line)) {
      const auto ids = tok.Encode(word);
      EXPECT_EQ(std::count(ids.begin(), ids.end(), kUnkId), 0) << word;
    }
  }
}

TEST(BuildVocabTest, Errors) {
  EXPECT_THROW(BuildVocab(std::vector<std::string>{}, 64), TokenizationError);
  EXPECT_THROW(BuildVocab(std::vector<std::string>{"  "}, 64),
               TokenizationError);
  // Alphabet {a, b}: needs 4 + 2 * 2.
  EXPECT_THROW(BuildVocab(std::vector<std::string>{"ab"}, 7),
               TokenizationError);
  EXPECT_NO_THROW(BuildVocab(std::vector<std::string>{"ab"}, 8));
}

TEST(BuildVocabTest, MergesFrequentPairs) {
  const std::vector<std::string> corpus = {"abc abc abc ab"};
  const auto v = BuildVocab(corpus, 12);
  EXPECT_TRUE(v.Contains(Marked("ab")));
}

TEST(EncodeTest, Basics) {
  const auto tok = HelloTokenizer();
  EXPECT_TRUE(tok.Encode("").empty());
  EXPECT_EQ(tok.Encode("a"), std::vector<TokenId>{tok.vocab().Find(Marked("a"))});
  const auto ids = tok.Encode("hello world");
  const std::vector<TokenId> expected = {
      tok.vocab().Find(Marked("he")), tok.vocab().Find("llo"),
      tok.vocab().Find(Marked("wor")), tok.vocab().Find("ld")};
  EXPECT_EQ(ids, expected);
}

TEST(EncodeTest, OutOfAlphabetIsUnknown) {
  const auto tok = HelloTokenizer();
  const auto ids = tok.Encode("hez");
  ASSERT_EQ(ids.size(), 2u);
  EXPECT_EQ(ids[0], tok.vocab().Find(Marked("he")));
  EXPECT_EQ(ids[1], kUnkId);
}

TEST(EncodeTest, MarkedCountEqualsWordCount) {
  const auto corpus = Corpus200();
  const Tokenizer tok(BuildVocab(corpus, 64));
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::string sentence;
    for (int w = 0; w < 5; ++w) {
      const auto& line = corpus[rng.Index(corpus.size())];
      const auto words = SplitWords(line);
      if (!sentence.empty()) sentence.push_back(' ');
      sentence.append(words[rng.Index(words.size())]);
    }
    const auto ids = tok.Encode(sentence);
    const auto marked = std::count_if(ids.begin(), ids.end(), [&](TokenId id) {
      return tok.vocab().IsWordBegin(id);
    });
    EXPECT_EQ(marked, 5) << sentence;
  }
}

TEST(DecodeTest, Basics) {
  const auto tok = HelloTokenizer();
  EXPECT_EQ(tok.Decode(std::vector<TokenId>{}), "");
  EXPECT_EQ(tok.Decode(tok.Encode("hello world")), "hello world");
  EXPECT_THROW(tok.Decode(std::vector<TokenId>{999}), TokenizationError);
  EXPECT_EQ(tok.Decode(std::vector<TokenId>{kBosId, tok.vocab().Find(Marked("a")),
                                            kEosId}),
            "a");
}

TEST(DecodeTest, ConstructedPieces) {
  const Tokenizer tok(MakeVocab({Marked("ab"), "c", Marked("d")}));
  EXPECT_EQ(tok.Decode(std::vector<TokenId>{4, 5, 6}), "abc d");
}

TEST(DecodeTest, RoundTripOnCorpus) {
  const auto corpus = GenerateCorpus(300, 5);
  const Tokenizer tok(BuildVocab(corpus, 96));
  for (const auto& line : corpus) {
    EXPECT_EQ(tok.Decode(tok.Encode(line)), line);
  }
  EXPECT_EQ(tok.Decode(tok.Encode("  the   old river ")), "the old river");
}

TEST(TokenizablePrefixTest, Examples) {
  const auto tok = HelloTokenizer();
  const auto& v = tok.vocab();
  const TokenId he = v.Find(Marked("he"));
  const TokenId llo = v.Find("llo");
  const TokenId wor = v.Find(Marked("wor"));
  const TokenId a = v.Find(Marked("a"));
  const TokenId b = v.Find(Marked("b"));
  const TokenId c = v.Find(Marked("c"));
  EXPECT_EQ(TokenizablePrefixLen(std::vector<TokenId>{he, llo}, v), 0u);
  EXPECT_EQ(TokenizablePrefixLen(std::vector<TokenId>{he, llo, wor}, v), 2u);
  EXPECT_EQ(TokenizablePrefixLen(std::vector<TokenId>{a, b, c}, v), 2u);
  EXPECT_EQ(TokenizablePrefixLen(std::vector<TokenId>{kBosId, a, b, c}, v), 2u);
  EXPECT_EQ(TokenizablePrefixLen(std::vector<TokenId>{}, v), 0u);
  EXPECT_EQ(TokenizablePrefixLen(std::vector<TokenId>{kBosId}, v), 0u);
  // </s> closes the final word.
  EXPECT_EQ(TokenizablePrefixLen(std::vector<TokenId>{he, llo, kEosId}, v), 2u);
}

// Reference scan: last index i > 0 whose token is word-begin or </s>.
std::size_t ReferencePrefixLen(const std::vector<TokenId>& ids,
                               const Vocabulary& v) {
  std::size_t start = !ids.empty() && ids[0] == kBosId ? 1 : 0;
  std::size_t best = 0;
  for (std::size_t i = start + 1; i < ids.size(); ++i) {
    const bool boundary = v.token(ids[i]).rfind(kWordBeginMarker, 0) == 0 ||
                          ids[i] == kEosId;
    if (boundary) best = i - start;
  }
  return best;
}

class RetokenizeTest : public ::testing::Test {
 protected:
  void SetUp() override {
    corpus_ = GenerateCorpus(400, 21);
    asr_ = std::make_unique<Tokenizer>(BuildVocab(corpus_, 72));
    lm_ = std::make_unique<Tokenizer>(BuildVocab(corpus_, 150));
  }

  std::vector<TokenId> RandomIds(Rng* rng, std::size_t len) const {
    std::vector<TokenId> ids;
    const auto n = asr_->vocab().size() - kNumSpecialTokens;
    for (std::size_t i = 0; i < len; ++i) {
      ids.push_back(kNumSpecialTokens + static_cast<TokenId>(rng->Index(n)));
    }
    return ids;
  }

  std::vector<std::string> corpus_;
  std::unique_ptr<Tokenizer> asr_;
  std::unique_ptr<Tokenizer> lm_;
};

TEST_F(RetokenizeTest, EmptyInput) {
  const auto r = RetokenizePrefix(std::vector<TokenId>{}, *asr_, *lm_);
  EXPECT_EQ(r.source_len, 0u);
  EXPECT_TRUE(r.lm_tokens.empty());
  EXPECT_EQ(r.text, "");
}

TEST_F(RetokenizeTest, IdentityWithSharedVocabulary) {
  const Tokenizer same(asr_->vocab());
  EXPECT_TRUE(asr_->SharesVocabulary(same));
  EXPECT_FALSE(asr_->SharesVocabulary(*lm_));
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto ids = RandomIds(&rng, 1 + rng.Index(12));
    const auto r = RetokenizePrefix(ids, *asr_, same);
    EXPECT_EQ(r.lm_tokens,
              std::vector<TokenId>(ids.begin(), ids.begin() + r.source_len));
  }
}

TEST_F(RetokenizeTest, SentenceWithSentinelMatchesDirectEncoding) {
  Rng rng(8);
  const auto words_of = [&](const std::string& s) { return SplitWords(s); };
  for (int trial = 0; trial < 20; ++trial) {
    std::string sentence;
    for (int w = 0; w < 10; ++w) {
      const auto words = words_of(corpus_[rng.Index(corpus_.size())]);
      if (!sentence.empty()) sentence.push_back(' ');
      sentence.append(words[rng.Index(words.size())]);
    }
    auto ids = asr_->Encode(sentence);
    ids.push_back(asr_->vocab().Find(Marked("a")));
    const auto r = RetokenizePrefix(ids, *asr_, *lm_);
    EXPECT_EQ(r.lm_tokens, lm_->Encode(sentence));
    EXPECT_EQ(r.text, sentence);
    EXPECT_EQ(lm_->Decode(r.lm_tokens), r.text);
  }
}

TEST_F(RetokenizeTest, FullIncludesLastWordAndStopsAtEos) {
  auto ids = asr_->Encode("the old river");
  std::vector<TokenId> with_bos = {kBosId};
  with_bos.insert(with_bos.end(), ids.begin(), ids.end());
  EXPECT_EQ(RetokenizeFull(with_bos, *asr_, *lm_), lm_->Encode("the old river"));
  with_bos.push_back(kEosId);
  with_bos.push_back(asr_->vocab().Find(Marked("a")));
  EXPECT_EQ(RetokenizeFull(with_bos, *asr_, *lm_), lm_->Encode("the old river"));
}

TEST_F(RetokenizeTest, PrefixStabilityAndBoundaries) {
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto ids = RandomIds(&rng, 1 + rng.Index(20));
    RetokenizedPrefix running;
    std::vector<TokenId> prev_lm;
    for (std::size_t n = 0; n <= ids.size(); ++n) {
      const std::vector<TokenId> s(ids.begin(), ids.begin() + n);
      const auto r = RetokenizePrefix(s, *asr_, *lm_);
      ASSERT_EQ(r.source_len, ReferencePrefixLen(s, asr_->vocab()));
      ASSERT_LE(r.source_len, s.size());
      // Tokens past the prefix form one (possibly incomplete) word.
      for (std::size_t i = r.source_len + 1; i < s.size(); ++i) {
        ASSERT_FALSE(asr_->vocab().IsWordBegin(s[i]));
      }
      ASSERT_TRUE(std::equal(prev_lm.begin(), prev_lm.end(), r.lm_tokens.begin(),
                             r.lm_tokens.begin() +
                                 std::min(prev_lm.size(), r.lm_tokens.size())));
      ASSERT_GE(r.lm_tokens.size(), prev_lm.size());
      running = ExtendRetokenization(running, s, *asr_, *lm_);
      ASSERT_EQ(running.lm_tokens, r.lm_tokens);
      ASSERT_EQ(running.text, r.text);
      ASSERT_EQ(running.source_len, r.source_len);
      prev_lm = r.lm_tokens;
    }
  }
}

TEST_F(RetokenizeTest, ExtendRejectsShrinking) {
  const auto ids = asr_->Encode("the old river");
  const auto r = RetokenizePrefix(ids, *asr_, *lm_);
  ASSERT_GT(r.source_len, 0u);
  EXPECT_THROW(ExtendRetokenization(r, std::span(ids).first(1), *asr_, *lm_),
               TokenizationError);
}

TEST_F(RetokenizeTest, ShortestLength) {
  EXPECT_THROW(ShortestRetokenizedLen({}, *asr_, *lm_), TokenizationError);
  const std::vector<std::vector<TokenId>> single = {{}};
  EXPECT_EQ(ShortestRetokenizedLen(single, *asr_, *lm_), 0u);

  const Tokenizer same(asr_->vocab());
  const TokenId a = asr_->vocab().Find(Marked("a"));
  const std::vector<std::vector<TokenId>> lens345 = {
      {a, a, a, a}, {a, a, a, a, a, a}, {a, a, a, a, a}};
  EXPECT_EQ(ShortestRetokenizedLen(lens345, *asr_, same), 3u);

  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<TokenId>> hyps;
    std::size_t brute = SIZE_MAX;
    for (int h = 0; h < 8; ++h) {
      hyps.push_back(RandomIds(&rng, rng.Index(15)));
      brute = std::min(brute,
                       RetokenizePrefix(hyps.back(), *asr_, *lm_).lm_tokens.size());
    }
    EXPECT_EQ(ShortestRetokenizedLen(hyps, *asr_, *lm_), brute);
  }
}

TEST(Utf8Test, SplitsCodePoints) {
  const auto parts = SplitUtf8("a\xC3\xA9" "b\xE2\x96\x81");
  ASSERT_EQ(parts.size(), 4u);
  EXPECT_EQ(parts[1], "\xC3\xA9");
  EXPECT_EQ(parts[3], kWordBeginMarker);
}

}  // namespace
}  // namespace delayfuse
