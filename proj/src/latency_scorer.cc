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

#include "delayfuse/latency_scorer.h"

#include <thread>
#include <utility>

namespace delayfuse {

LatencyScorer::LatencyScorer(std::shared_ptr<LmScorer> inner, Millis per_call,
                             Millis per_token)
    : inner_(std::move(inner)), per_call_(per_call), per_token_(per_token) {
  if (!inner_) throw LmError("latency wrapper needs an inner scorer");
  if (per_call_.count() < 0 || per_token_.count() < 0) {
    throw LmError("latency costs must be non-negative");
  }
}

std::vector<ScoreResult> LatencyScorer::ScoreBatchIncremental(
    std::span<const ScoreRequest> batch) {
  auto results = inner_->ScoreBatchIncremental(batch);
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    tokens += results[i].cache.scored_len - batch[i].cache.scored_len;
  }
  const Millis cost = per_call_ + per_token_ * static_cast<double>(tokens);
  if (cost.count() > 0) {
    const auto start = std::chrono::steady_clock::now();
    std::this_thread::sleep_for(cost);
    const auto slept = std::chrono::steady_clock::now() - start;
    emulated_us_.fetch_add(
        std::chrono::duration_cast<std::chrono::microseconds>(slept).count(),
        std::memory_order_relaxed);
  }
  return results;
}

void LatencyScorer::Reset() {
  inner_->Reset();
  emulated_us_ = 0;
}

std::shared_ptr<LatencyScorer> WrapWithLatency(std::shared_ptr<LmScorer> inner,
                                               Millis per_call,
                                               Millis per_token) {
  return std::make_shared<LatencyScorer>(std::move(inner), per_call, per_token);
}

}  // namespace delayfuse
