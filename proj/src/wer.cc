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

#include "delayfuse/wer.h"

#include <algorithm>
#include <vector>

#include "delayfuse/tokenization.h"

namespace delayfuse {

double WerStats::wer() const {
  return static_cast<double>(errors()) /
         static_cast<double>(std::max<std::size_t>(1, ref_words));
}

WerStats& WerStats::operator+=(const WerStats& other) {
  ref_words += other.ref_words;
  subs += other.subs;
  ins += other.ins;
  dels += other.dels;
  return *this;
}

WerStats ComputeWer(std::span<const std::string> ref,
                    std::span<const std::string> hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  // cost[i][j]: edit distance between ref[:i] and hyp[:j].
  std::vector<std::size_t> cost((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& {
    return cost[i * (m + 1) + j];
  };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag =
          at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }

  WerStats stats;
  stats.ref_words = n;
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        if (!same) ++stats.subs;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++stats.dels;
      --i;
    } else {
      ++stats.ins;
      --j;
    }
  }
  return stats;
}

WerStats ComputeWer(std::string_view ref, std::string_view hyp) {
  auto to_words = [](std::string_view text) {
    std::vector<std::string> words;
    for (auto w : SplitWords(text)) words.emplace_back(w);
    return words;
  };
  const auto r = to_words(ref);
  const auto h = to_words(hyp);
  return ComputeWer(r, h);
}

}  // namespace delayfuse
