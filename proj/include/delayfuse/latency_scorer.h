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

#ifndef DELAYFUSE_LATENCY_SCORER_H_
#define DELAYFUSE_LATENCY_SCORER_H_

#include <atomic>
#include <chrono>
#include <memory>

#include "delayfuse/lm_scorer.h"

namespace delayfuse {

using Millis = std::chrono::duration<double, std::milli>;

// Emulates an expensive LM: every batch call sleeps
// per_call + per_token * (tokens scored in that call) before returning the
// inner scorer's results. Counters are the inner scorer's.
class LatencyScorer : public LmScorer {
 public:
  LatencyScorer(std::shared_ptr<LmScorer> inner, Millis per_call,
                Millis per_token);

  std::vector<ScoreResult> ScoreBatchIncremental(
      std::span<const ScoreRequest> batch) override;
  double ScoreSequence(std::span<const TokenId> seq) const override {
    return inner_->ScoreSequence(seq);
  }
  ScorerCounters counters() const override { return inner_->counters(); }
  void Reset() override;

  // Total time spent sleeping, summed over all calls.
  Millis emulated_time() const {
    return Millis(emulated_us_.load(std::memory_order_relaxed) / 1000.0);
  }

 private:
  std::shared_ptr<LmScorer> inner_;
  Millis per_call_;
  Millis per_token_;
  std::atomic<std::int64_t> emulated_us_{0};
};

std::shared_ptr<LatencyScorer> WrapWithLatency(std::shared_ptr<LmScorer> inner,
                                               Millis per_call,
                                               Millis per_token);

}  // namespace delayfuse

#endif  // DELAYFUSE_LATENCY_SCORER_H_
