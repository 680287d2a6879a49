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
#include <limits>
#include <map>
#include <set>
#include <utility>

namespace delayfuse {

namespace {

constexpr const char* kSpecialTokens[] = {"<blank>", "<s>", "</s>", "<unk>"};

std::size_t Utf8Length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

bool IsAsciiSpace(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

bool StartsWithMarker(std::string_view s) {
  return s.substr(0, kWordBeginMarker.size()) == kWordBeginMarker;
}

std::uint64_t Fingerprint(const std::vector<std::string>& tokens) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xFF;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::vector<std::string_view> SplitUtf8(std::string_view text) {
  std::vector<std::string_view> chars;
  chars.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t len = Utf8Length(static_cast<unsigned char>(text[pos]));
    if (pos + len > text.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[pos + k]) >> 6) != 0x2) {
        len = 1;
        break;
      }
    }
    chars.push_back(text.substr(pos, len));
    pos += len;
  }
  return chars;
}

std::vector<std::string_view> SplitWords(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && IsAsciiSpace(text[pos])) ++pos;
    std::size_t end = pos;
    while (end < text.size() && !IsAsciiSpace(text[end])) ++end;
    if (end > pos) words.push_back(text.substr(pos, end - pos));
    pos = end;
  }
  return words;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> tokens)
    : tokens_(std::move(tokens)) {
  if (tokens_.size() < static_cast<std::size_t>(kNumSpecialTokens)) {
    throw TokenizationError("vocabulary must hold the four special tokens");
  }
  for (TokenId id = kBosId; id < kNumSpecialTokens; ++id) {
    if (tokens_[id] != kSpecialTokens[id]) {
      throw TokenizationError("vocabulary line " + std::to_string(id + 1) +
                              " must be " + kSpecialTokens[id] + ", got '" +
                              tokens_[id] + "'");
    }
  }
  index_.reserve(tokens_.size());
  word_begin_.assign(tokens_.size(), false);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const std::string& t = tokens_[i];
    if (t.empty()) {
      throw TokenizationError("empty token at id " + std::to_string(i));
    }
    if (!index_.emplace(t, static_cast<TokenId>(i)).second) {
      throw TokenizationError("duplicate token '" + t + "'");
    }
    if (t.find(kWordBeginMarker, 1) != std::string::npos) {
      throw TokenizationError("word-begin marker inside token '" + t + "'");
    }
    if (i >= static_cast<std::size_t>(kNumSpecialTokens)) {
      word_begin_[i] = StartsWithMarker(t);
      max_token_chars_ = std::max(max_token_chars_, SplitUtf8(t).size());
    }
  }
}

Vocabulary Vocabulary::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TokenizationError("cannot open vocabulary " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

void Vocabulary::Save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TokenizationError("cannot write vocabulary " + path);
  for (const auto& t : tokens_) out << t << '\n';
}

const std::string& Vocabulary::token(TokenId id) const {
  if (!IsValid(id)) {
    throw TokenizationError("token id " + std::to_string(id) +
                            " outside vocabulary of size " +
                            std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

TokenId Vocabulary::Find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::Contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

// ---------------------------------------------------------------------------
// Vocabulary construction

Vocabulary BuildVocab(std::span<const std::string> corpus,
                      std::size_t target_size) {
  std::map<std::string, std::size_t> word_freq;
  for (const auto& line : corpus) {
    for (auto w : SplitWords(line)) ++word_freq[std::string(w)];
  }
  if (word_freq.empty()) throw TokenizationError("empty corpus");

  std::set<std::string> alphabet;
  for (const auto& [word, freq] : word_freq) {
    for (auto c : SplitUtf8(word)) alphabet.emplace(c);
  }
  const std::size_t required = kNumSpecialTokens + 2 * alphabet.size();
  if (target_size < required) {
    throw TokenizationError(
        "target size " + std::to_string(target_size) +
        " cannot cover the specials and " + std::to_string(alphabet.size()) +
        " characters (need " + std::to_string(required) + ")");
  }

  std::vector<std::string> tokens(std::begin(kSpecialTokens),
                                  std::end(kSpecialTokens));
  std::set<std::string> present;
  for (const auto& c : alphabet) {
    tokens.push_back(std::string(kWordBeginMarker) + c);
    tokens.push_back(c);
  }
  present.insert(tokens.begin(), tokens.end());

  struct Word {
    std::vector<std::string> symbols;
    std::size_t freq;
  };
  std::vector<Word> words;
  words.reserve(word_freq.size());
  for (const auto& [word, freq] : word_freq) {
    Word w{{}, freq};
    bool first = true;
    for (auto c : SplitUtf8(word)) {
      w.symbols.push_back(first ? std::string(kWordBeginMarker) + std::string(c)
                                : std::string(c));
      first = false;
    }
    words.push_back(std::move(w));
  }

  while (tokens.size() < target_size) {
    std::map<std::pair<std::string, std::string>, std::size_t> pair_counts;
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
        pair_counts[{w.symbols[i], w.symbols[i + 1]}] += w.freq;
      }
    }
    if (pair_counts.empty()) break;
    // std::map iterates in lexicographic order, so the first maximum wins ties.
    auto best = pair_counts.begin();
    for (auto it = pair_counts.begin(); it != pair_counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const auto [left, right] = best->first;
    const std::string merged = left + right;
    for (auto& w : words) {
      std::vector<std::string> out;
      out.reserve(w.symbols.size());
      for (std::size_t i = 0; i < w.symbols.size(); ++i) {
        if (i + 1 < w.symbols.size() && w.symbols[i] == left &&
            w.symbols[i + 1] == right) {
          out.push_back(merged);
          ++i;
        } else {
          out.push_back(std::move(w.symbols[i]));
        }
      }
      w.symbols = std::move(out);
    }
    if (present.insert(merged).second) tokens.push_back(merged);
  }
  return Vocabulary(std::move(tokens));
}

// ---------------------------------------------------------------------------
// Tokenizer

Tokenizer::Tokenizer(Vocabulary vocab)
    : vocab_(std::move(vocab)), fingerprint_(Fingerprint(vocab_.tokens())) {}

void Tokenizer::EncodeWord(std::string_view word,
                           std::vector<TokenId>* out) const {
  const auto chars = SplitUtf8(word);
  // Byte offset of each code point, plus the end.
  std::vector<std::size_t> offsets;
  offsets.reserve(chars.size() + 1);
  for (auto c : chars) offsets.push_back(c.data() - word.data());
  offsets.push_back(word.size());

  std::string piece;
  std::size_t pos = 0;
  while (pos < chars.size()) {
    const std::size_t room = chars.size() - pos;
    std::size_t len = std::min(room, vocab_.max_token_chars());
    TokenId found = kUnkId;
    for (; len > 0; --len) {
      piece.clear();
      if (pos == 0) piece = kWordBeginMarker;
      piece.append(word.substr(offsets[pos], offsets[pos + len] - offsets[pos]));
      const TokenId id = vocab_.Find(piece);
      if (id != kUnkId) {
        found = id;
        break;
      }
    }
    out->push_back(found);
    pos += std::max<std::size_t>(len, 1);
  }
}

std::vector<TokenId> Tokenizer::Encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (auto word : SplitWords(text)) EncodeWord(word, &ids);
  return ids;
}

std::string Tokenizer::Decode(std::span<const TokenId> ids) const {
  std::string text;
  for (TokenId id : ids) {
    const std::string& t = vocab_.token(id);
    if (vocab_.IsSpecial(id)) continue;
    if (StartsWithMarker(t)) {
      text.push_back(' ');
      text.append(t, kWordBeginMarker.size());
    } else {
      text.append(t);
    }
  }
  if (!text.empty() && text.front() == ' ') text.erase(0, 1);
  return text;
}

// ---------------------------------------------------------------------------
// Re-tokenization

namespace {

std::span<const TokenId> StripBos(std::span<const TokenId> ids) {
  if (!ids.empty() && ids.front() == kBosId) return ids.subspan(1);
  return ids;
}

std::vector<TokenId> MapWords(std::span<const TokenId> asr_ids,
                              const std::string& text,
                              const Tokenizer& asr_tok,
                              const Tokenizer& lm_tok) {
  if (asr_tok.SharesVocabulary(lm_tok)) {
    return {asr_ids.begin(), asr_ids.end()};
  }
  return lm_tok.Encode(text);
}

}  // namespace

std::size_t TokenizablePrefixLen(std::span<const TokenId> ids,
                                 const Vocabulary& vocab) {
  const auto content = StripBos(ids);
  std::size_t len = 0;
  for (std::size_t i = 1; i < content.size(); ++i) {
    if (vocab.IsWordBegin(content[i]) || content[i] == kEosId) len = i;
  }
  return len;
}

RetokenizedPrefix RetokenizePrefix(std::span<const TokenId> ids,
                                   const Tokenizer& asr_tok,
                                   const Tokenizer& lm_tok) {
  const auto content = StripBos(ids);
  RetokenizedPrefix out;
  out.source_len = TokenizablePrefixLen(ids, asr_tok.vocab());
  const auto prefix = content.first(out.source_len);
  out.text = asr_tok.Decode(prefix);
  out.lm_tokens = MapWords(prefix, out.text, asr_tok, lm_tok);
  return out;
}

std::vector<TokenId> RetokenizeFull(std::span<const TokenId> ids,
                                    const Tokenizer& asr_tok,
                                    const Tokenizer& lm_tok) {
  auto content = StripBos(ids);
  auto eos = std::find(content.begin(), content.end(), kEosId);
  content = content.first(static_cast<std::size_t>(eos - content.begin()));
  return MapWords(content, asr_tok.Decode(content), asr_tok, lm_tok);
}

RetokenizedPrefix ExtendRetokenization(const RetokenizedPrefix& prev,
                                       std::span<const TokenId> ids,
                                       const Tokenizer& asr_tok,
                                       const Tokenizer& lm_tok) {
  const std::size_t len = TokenizablePrefixLen(ids, asr_tok.vocab());
  if (len == prev.source_len) return prev;
  if (len < prev.source_len) {
    throw TokenizationError(
        "re-tokenization state covers more tokens than the hypothesis");
  }
  const auto segment =
      StripBos(ids).subspan(prev.source_len, len - prev.source_len);
  RetokenizedPrefix out;
  out.source_len = len;
  const std::string seg_text = asr_tok.Decode(segment);
  out.text = prev.text;
  if (!out.text.empty() && !seg_text.empty()) out.text.push_back(' ');
  out.text += seg_text;
  out.lm_tokens = prev.lm_tokens;
  const auto fresh = MapWords(segment, seg_text, asr_tok, lm_tok);
  out.lm_tokens.insert(out.lm_tokens.end(), fresh.begin(), fresh.end());
  return out;
}

std::size_t ShortestRetokenizedLen(
    std::span<const std::vector<TokenId>> hyps, const Tokenizer& asr_tok,
    const Tokenizer& lm_tok) {
  if (hyps.empty()) throw TokenizationError("no hypotheses");
  std::size_t shortest = std::numeric_limits<std::size_t>::max();
  for (const auto& h : hyps) {
    shortest =
        std::min(shortest, RetokenizePrefix(h, asr_tok, lm_tok).lm_tokens.size());
  }
  return shortest;
}

}  // namespace delayfuse
