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

#ifndef DELAYFUSE_CORPUS_H_
#define DELAYFUSE_CORPUS_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace delayfuse {

// Seeded English-like sentences from a small template grammar.
std::vector<std::string> GenerateCorpus(std::size_t sentences,
                                        std::uint64_t seed);

// Non-empty lines with whitespace collapsed to single spaces.
std::vector<std::string> ReadLines(const std::string& path);
void WriteLines(const std::string& path, std::span<const std::string> lines);

// FNV-1a; stable across platforms and runs.
std::uint64_t StableHash(std::string_view text);

struct CorpusSplit {
  std::vector<std::string> train;
  std::vector<std::string> eval;
};

// Drops duplicate sentences, then routes a sentence to eval when
// StableHash(sentence) % 10 == 0. Both sides keep corpus order.
CorpusSplit SplitCorpus(std::span<const std::string> sentences);

}  // namespace delayfuse

#endif  // DELAYFUSE_CORPUS_H_
