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

#ifndef DELAYFUSE_WER_H_
#define DELAYFUSE_WER_H_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace delayfuse {

struct WerStats {
  std::size_t ref_words = 0;
  std::size_t subs = 0;
  std::size_t ins = 0;
  std::size_t dels = 0;

  std::size_t errors() const { return subs + ins + dels; }
  // errors / max(1, ref_words).
  double wer() const;

  WerStats& operator+=(const WerStats& other);
  bool operator==(const WerStats&) const = default;
};

// Levenshtein alignment with unit costs. Among equal-cost alignments the
// backtrace prefers substitution, then deletion, then insertion.
WerStats ComputeWer(std::span<const std::string> ref,
                    std::span<const std::string> hyp);

// Whitespace-separated word sequences.
WerStats ComputeWer(std::string_view ref, std::string_view hyp);

}  // namespace delayfuse

#endif  // DELAYFUSE_WER_H_
