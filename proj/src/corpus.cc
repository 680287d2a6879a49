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

#include "delayfuse/corpus.h"

#include <array>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include "delayfuse/rng.h"
#include "delayfuse/tokenization.h"

namespace delayfuse {

namespace {

using WordList = std::span<const std::string_view>;

constexpr std::array<std::string_view, 8> kDeterminers = {
    "the", "a", "every", "some", "this", "that", "my", "our"};
constexpr std::array<std::string_view, 12> kAdjectives = {
    "small", "quiet", "bright", "old",    "young", "green",
    "heavy", "gentle", "clever", "busy", "early", "distant"};
constexpr std::array<std::string_view, 16> kNouns = {
    "farmer",  "river",  "teacher", "garden", "window", "market",
    "doctor",  "village", "letter", "engine", "child",  "station",
    "forest",  "captain", "kitchen", "bridge"};
constexpr std::array<std::string_view, 10> kTransitive = {
    "saw",     "found",    "painted", "carried", "watched",
    "opened",  "followed", "cleaned", "visited", "repaired"};
constexpr std::array<std::string_view, 6> kIntransitive = {
    "slept", "smiled", "waited", "arrived", "laughed", "rested"};
constexpr std::array<std::string_view, 6> kPrepositions = {
    "near", "behind", "under", "beside", "across", "inside"};
constexpr std::array<std::string_view, 6> kAdverbs = {
    "slowly", "quietly", "again", "today", "often", "happily"};
constexpr std::array<std::string_view, 6> kNames = {
    "anna", "peter", "maria", "john", "laura", "tom"};
constexpr std::array<std::string_view, 3> kConjunctions = {"and", "but",
                                                           "while"};

constexpr double kAdjectiveProb = 0.4;

class SentenceBuilder {
 public:
  explicit SentenceBuilder(Rng* rng) : rng_(rng) {}

  SentenceBuilder& Pick(WordList words) {
    return Word(words[rng_->Index(words.size())]);
  }
  SentenceBuilder& Word(std::string_view w) {
    if (!text_.empty()) text_.push_back(' ');
    text_.append(w);
    return *this;
  }
  SentenceBuilder& NounPhrase() {
    Pick(kDeterminers);
    if (rng_->Bernoulli(kAdjectiveProb)) Pick(kAdjectives);
    return Pick(kNouns);
  }
  std::string Take() { return std::move(text_); }

 private:
  Rng* rng_;
  std::string text_;
};

std::string Sentence(Rng* rng) {
  SentenceBuilder s(rng);
  switch (rng->Index(6)) {
    case 0:
      s.NounPhrase().Pick(kTransitive).NounPhrase();
      break;
    case 1:
      s.NounPhrase().Pick(kIntransitive).Pick(kPrepositions).NounPhrase();
      break;
    case 2:
      s.Pick(kNames).Pick(kTransitive).NounPhrase().Pick(kAdverbs);
      break;
    case 3:
      s.Pick(kNames).Word("and").Pick(kNames).Pick(kIntransitive)
          .Pick(kPrepositions).NounPhrase();
      break;
    case 4:
      s.NounPhrase().Pick(kIntransitive).Pick(kAdverbs).Pick(kConjunctions)
          .NounPhrase().Pick(kIntransitive);
      break;
    default:
      s.Pick(kNames).Pick(kTransitive).NounPhrase().Pick(kPrepositions)
          .NounPhrase();
      break;
  }
  return s.Take();
}

std::string Normalize(std::string_view line) {
  std::string out;
  for (auto w : SplitWords(line)) {
    if (!out.empty()) out.push_back(' ');
    out.append(w);
  }
  return out;
}

}  // namespace

std::vector<std::string> GenerateCorpus(std::size_t sentences,
                                        std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> out;
  out.reserve(sentences);
  for (std::size_t i = 0; i < sentences; ++i) out.push_back(Sentence(&rng));
  return out;
}

std::vector<std::string> ReadLines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    auto norm = Normalize(line);
    if (!norm.empty()) out.push_back(std::move(norm));
  }
  return out;
}

void WriteLines(const std::string& path, std::span<const std::string> lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& l : lines) out << l << '\n';
}

std::uint64_t StableHash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

CorpusSplit SplitCorpus(std::span<const std::string> sentences) {
  CorpusSplit split;
  std::unordered_set<std::string_view> seen;
  for (const auto& s : sentences) {
    if (!seen.insert(s).second) continue;
    (StableHash(s) % 10 == 0 ? split.eval : split.train).push_back(s);
  }
  return split;
}

}  // namespace delayfuse
