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

// Wordpiece vocabularies, greedy longest-match tokenization and
// re-tokenization of ASR token prefixes into an LM token inventory.

#ifndef DELAYFUSE_TOKENIZATION_H_
#define DELAYFUSE_TOKENIZATION_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace delayfuse {

using TokenId = std::int32_t;

// Fixed ids of the special tokens. The first four lines of every vocabulary
// file hold them in this order.
inline constexpr TokenId kBlankId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kEosId = 2;
inline constexpr TokenId kUnkId = 3;
inline constexpr TokenId kNumSpecialTokens = 4;

// U+2581 LOWER ONE EIGHTH BLOCK, the SentencePiece word-begin marker.
inline constexpr std::string_view kWordBeginMarker = "\xE2\x96\x81";

class TokenizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Splits UTF-8 text into code points. Invalid lead bytes become one-byte
// units so that the function is total.
std::vector<std::string_view> SplitUtf8(std::string_view text);

// Splits on ASCII whitespace, dropping empty fields.
std::vector<std::string_view> SplitWords(std::string_view text);

class Vocabulary {
 public:
  // `tokens` must start with the four specials. Throws TokenizationError on
  // duplicates or a marker in the middle of a token.
  explicit Vocabulary(std::vector<std::string> tokens);

  static Vocabulary Load(const std::string& path);
  void Save(const std::string& path) const;

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Returns kUnkId when absent.
  TokenId Find(std::string_view token) const;
  bool Contains(std::string_view token) const;

  bool IsSpecial(TokenId id) const { return id >= 0 && id < kNumSpecialTokens; }
  bool IsWordBegin(TokenId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < word_begin_.size() &&
           word_begin_[id];
  }
  bool IsValid(TokenId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < tokens_.size();
  }
  // Longest token length in code points, marker included.
  std::size_t max_token_chars() const { return max_token_chars_; }

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<bool> word_begin_;
  std::size_t max_token_chars_ = 0;
};

// Builds a wordpiece vocabulary of at most `target_size` tokens: the four
// specials, both marked and unmarked variants of every character seen in
// `corpus`, then pieces obtained by repeatedly merging the most frequent
// adjacent pair inside words (ties broken lexicographically).
//
// Throws TokenizationError for an empty corpus or when target_size cannot
// hold the specials plus the character inventory.
Vocabulary BuildVocab(std::span<const std::string> corpus,
                      std::size_t target_size);

class Tokenizer {
 public:
  explicit Tokenizer(Vocabulary vocab);

  const Vocabulary& vocab() const { return vocab_; }

  // Greedy longest-match per whitespace-delimited word. The first piece of a
  // word carries the marker; characters with no matching piece become
  // kUnkId.
  std::vector<TokenId> Encode(std::string_view text) const;

  // Concatenates pieces, turning each marker into a space. Specials are
  // skipped. Throws TokenizationError on an id outside the vocabulary.
  std::string Decode(std::span<const TokenId> ids) const;

  // Identical token inventories; re-tokenization is then the identity.
  bool SharesVocabulary(const Tokenizer& other) const {
    return fingerprint_ == other.fingerprint_ &&
           vocab_.size() == other.vocab_.size();
  }

 private:
  void EncodeWord(std::string_view word, std::vector<TokenId>* out) const;

  Vocabulary vocab_;
  std::uint64_t fingerprint_;
};

struct RetokenizedPrefix {
  // ASR tokens consumed, not counting a leading <s>.
  std::size_t source_len = 0;
  std::vector<TokenId> lm_tokens;
  std::string text;
};

// Number of leading ASR tokens (after an optional <s>) that form complete
// words: the largest i such that token i+1 begins a word. A trailing </s>
// also closes the last word. Returns 0 when no word is complete yet.
std::size_t TokenizablePrefixLen(std::span<const TokenId> ids,
                                 const Vocabulary& vocab);

// Re-tokenizes the tokenizable prefix of `ids` with `lm_tok`. When both
// tokenizers share one vocabulary, the ASR ids are used as-is.
RetokenizedPrefix RetokenizePrefix(std::span<const TokenId> ids,
                                   const Tokenizer& asr_tok,
                                   const Tokenizer& lm_tok);

// Re-tokenizes a whole hypothesis, including its last word. <s> and </s>
// are dropped.
std::vector<TokenId> RetokenizeFull(std::span<const TokenId> ids,
                                    const Tokenizer& asr_tok,
                                    const Tokenizer& lm_tok);

// Extends `prev` (a result for a prefix of `ids`) to the current tokenizable
// prefix of `ids`, re-encoding only the newly completed words. Equal to
// RetokenizePrefix(ids, ...) for any prefix-consistent `prev`.
RetokenizedPrefix ExtendRetokenization(const RetokenizedPrefix& prev,
                                       std::span<const TokenId> ids,
                                       const Tokenizer& asr_tok,
                                       const Tokenizer& lm_tok);

// Shortest LM-token length over the re-tokenized hypotheses. Throws
// TokenizationError on an empty list.
std::size_t ShortestRetokenizedLen(
    std::span<const std::vector<TokenId>> hyps, const Tokenizer& asr_tok,
    const Tokenizer& lm_tok);

}  // namespace delayfuse

#endif  // DELAYFUSE_TOKENIZATION_H_
