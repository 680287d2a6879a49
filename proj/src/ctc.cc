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

#include "delayfuse/ctc.h"

#include <cmath>
#include <string>

namespace delayfuse {

namespace {

constexpr std::size_t kMaxBruteForceFrames = 12;
constexpr std::size_t kMaxBruteForceColumns = 8;

void CheckLabel(TokenId label, std::size_t columns) {
  if (label == kBlankId || label < 0 ||
      static_cast<std::size_t>(label) >= columns) {
    throw AcousticError("invalid CTC label " + std::to_string(label));
  }
}

std::optional<TokenId> LastOf(std::span<const TokenId> labels) {
  if (labels.empty()) return std::nullopt;
  return labels.back();
}

void CheckBruteForceSize(const EmissionMatrix& emissions) {
  if (emissions.num_frames() > kMaxBruteForceFrames ||
      emissions.vocab_size() > kMaxBruteForceColumns) {
    throw AcousticError("instance too large for path enumeration (T=" +
                        std::to_string(emissions.num_frames()) + ", V=" +
                        std::to_string(emissions.vocab_size()) + ")");
  }
}

// Pairs for every prefix length 0..labels.size() after `frames` frames.
std::vector<CtcScorePair> RunTrellis(const EmissionMatrix& emissions,
                                     std::span<const TokenId> labels,
                                     std::size_t frames) {
  std::vector<CtcScorePair> cur(labels.size() + 1);
  cur[0] = kEmptyPrefixPair;
  std::vector<CtcScorePair> next(labels.size() + 1);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto frame = emissions.row(t);
    for (std::size_t j = 0; j <= labels.size(); ++j) {
      next[j] = CtcStepExtend(cur[j], frame, LastOf(labels.first(j)),
                              std::nullopt);
      if (j > 0) {
        next[j].Merge(CtcStepExtend(cur[j - 1], frame,
                                    LastOf(labels.first(j - 1)),
                                    labels[j - 1]));
      }
    }
    std::swap(cur, next);
  }
  return cur;
}

}  // namespace

CtcScorePair CtcStepExtend(const CtcScorePair& pair,
                           std::span<const double> frame,
                           std::optional<TokenId> last_label,
                           std::optional<TokenId> new_label) {
  if (last_label) CheckLabel(*last_label, frame.size());
  CtcScorePair out;
  if (!new_label) {
    out.blank = pair.Total() + frame[kBlankId];
    out.nonblank =
        last_label ? pair.nonblank + frame[*last_label] : kLogZero;
    return out;
  }
  const TokenId c = *new_label;
  CheckLabel(c, frame.size());
  if (last_label && *last_label == c) {
    out.nonblank = pair.blank + frame[c];
  } else {
    out.nonblank = pair.Total() + frame[c];
  }
  return out;
}

double CtcSequenceLogProb(const EmissionMatrix& emissions,
                          std::span<const TokenId> labels) {
  return RunTrellis(emissions, labels, emissions.num_frames()).back().Total();
}

double CtcPrefixLogProb(const EmissionMatrix& emissions,
                        std::span<const TokenId> prefix) {
  if (prefix.empty()) return 0.0;
  const auto head = prefix.first(prefix.size() - 1);
  // Mass of paths that emit the last label for the first time at frame t,
  // having collapsed to `head` over frames 0..t-1.
  std::vector<CtcScorePair> cur(head.size() + 1);
  cur[0] = kEmptyPrefixPair;
  std::vector<CtcScorePair> next(head.size() + 1);
  double total = kLogZero;
  for (std::size_t t = 0; t < emissions.num_frames(); ++t) {
    const auto frame = emissions.row(t);
    total = LogAdd(total, CtcStepExtend(cur.back(), frame, LastOf(head),
                                        prefix.back())
                              .nonblank);
    for (std::size_t j = 0; j <= head.size(); ++j) {
      next[j] =
          CtcStepExtend(cur[j], frame, LastOf(head.first(j)), std::nullopt);
      if (j > 0) {
        next[j].Merge(CtcStepExtend(cur[j - 1], frame,
                                    LastOf(head.first(j - 1)), head[j - 1]));
      }
    }
    std::swap(cur, next);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Enumeration oracles

namespace {

// Depth-first walk over every path whose partial collapse stays consistent
// with `labels`. In prefix mode a path stops at the frame that completes
// the prefix and picks up the mass of every continuation.
class PathWalker {
 public:
  PathWalker(const EmissionMatrix& emissions, std::span<const TokenId> labels,
             bool stop_at_prefix)
      : emissions_(emissions),
        labels_(labels),
        stop_at_prefix_(stop_at_prefix) {
    // suffix_mass_[t]: log of the summed probability of all paths over
    // frames t..T-1.
    const std::size_t frames = emissions.num_frames();
    suffix_mass_.assign(frames + 1, 0.0);
    for (std::size_t t = frames; t-- > 0;) {
      suffix_mass_[t] = suffix_mass_[t + 1] + LogSumExp(emissions.row(t));
    }
  }

  double Run() {
    for (TokenId l : labels_) CheckLabel(l, emissions_.vocab_size());
    total_ = kLogZero;
    if (stop_at_prefix_ && labels_.empty()) return suffix_mass_[0];
    Walk(0, 0, kBlankId, 0.0);
    return total_;
  }

 private:
  void Walk(std::size_t t, std::size_t emitted, TokenId prev, double logp) {
    if (t == emissions_.num_frames()) {
      if (emitted == labels_.size()) total_ = LogAdd(total_, logp);
      return;
    }
    const auto frame = emissions_.row(t);
    for (TokenId v = 0; v < static_cast<TokenId>(frame.size()); ++v) {
      std::size_t next_emitted = emitted;
      if (v != kBlankId && v != prev) {
        if (emitted == labels_.size() || labels_[emitted] != v) continue;
        next_emitted = emitted + 1;
      }
      const double next_logp = logp + frame[v];
      if (stop_at_prefix_ && next_emitted == labels_.size() &&
          next_emitted != emitted) {
        // Prefix complete: every continuation counts.
        total_ = LogAdd(total_, next_logp + suffix_mass_[t + 1]);
        continue;
      }
      Walk(t + 1, next_emitted, v, next_logp);
    }
  }

  const EmissionMatrix& emissions_;
  std::span<const TokenId> labels_;
  bool stop_at_prefix_;
  std::vector<double> suffix_mass_;
  double total_ = kLogZero;
};

}  // namespace

double BruteForceCtc(const EmissionMatrix& emissions,
                     std::span<const TokenId> labels) {
  CheckBruteForceSize(emissions);
  return PathWalker(emissions, labels, /*stop_at_prefix=*/false).Run();
}

double BruteForceCtcPrefix(const EmissionMatrix& emissions,
                           std::span<const TokenId> prefix) {
  CheckBruteForceSize(emissions);
  return PathWalker(emissions, prefix, /*stop_at_prefix=*/true).Run();
}

// ---------------------------------------------------------------------------
// Label-synchronous scorer

CtcLabelSyncScorer::CtcLabelSyncScorer(const EmissionMatrix& emissions)
    : emissions_(emissions) {}

std::shared_ptr<const CtcLabelSyncScorer::Trellis> CtcLabelSyncScorer::Get(
    std::span<const TokenId> prefix) {
  std::vector<TokenId> key(prefix.begin(), prefix.end());
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;

  const std::size_t frames = emissions_.num_frames();
  auto trellis = std::make_shared<Trellis>();
  trellis->pairs.resize(frames + 1);
  if (prefix.empty()) {
    trellis->pairs[0] = kEmptyPrefixPair;
    for (std::size_t t = 0; t < frames; ++t) {
      trellis->pairs[t + 1] = CtcStepExtend(
          trellis->pairs[t], emissions_.row(t), std::nullopt, std::nullopt);
    }
    trellis->prefix_log_prob = 0.0;
  } else {
    const auto head = prefix.first(prefix.size() - 1);
    const auto parent = Get(head);
    const TokenId c = prefix.back();
    double prefix_mass = kLogZero;
    for (std::size_t t = 0; t < frames; ++t) {
      const auto frame = emissions_.row(t);
      const CtcScorePair fresh =
          CtcStepExtend(parent->pairs[t], frame, LastOf(head), c);
      prefix_mass = LogAdd(prefix_mass, fresh.nonblank);
      CtcScorePair next =
          CtcStepExtend(trellis->pairs[t], frame, c, std::nullopt);
      next.Merge(fresh);
      trellis->pairs[t + 1] = next;
    }
    trellis->prefix_log_prob = prefix_mass;
  }
  memo_.emplace(std::move(key), trellis);
  return trellis;
}

double CtcLabelSyncScorer::PrefixLogProb(std::span<const TokenId> prefix) {
  return Get(prefix)->prefix_log_prob;
}

std::vector<double> CtcLabelSyncScorer::NextScores(
    std::span<const TokenId> prefix) {
  const std::size_t columns = emissions_.vocab_size();
  for (TokenId l : prefix) {
    CheckLabel(l, columns);
  }
  const auto trellis = Get(prefix);
  std::vector<double> scores(columns, kLogZero);
  const double base = trellis->prefix_log_prob;
  if (IsLogZero(base)) return scores;

  const auto last = LastOf(prefix);
  const std::size_t frames = emissions_.num_frames();
  for (TokenId c = kNumSpecialTokens; c < static_cast<TokenId>(columns); ++c) {
    double mass = kLogZero;
    for (std::size_t t = 0; t < frames; ++t) {
      mass = LogAdd(mass, CtcStepExtend(trellis->pairs[t], emissions_.row(t),
                                        last, c)
                              .nonblank);
    }
    scores[c] = IsLogZero(mass) ? kLogZero : mass - base;
  }
  const double full = trellis->pairs[frames].Total();
  scores[kEosId] = IsLogZero(full) ? kLogZero : full - base;
  return scores;
}

double CtcLabelSyncScore(const EmissionMatrix& emissions,
                         std::span<const TokenId> prefix, TokenId candidate) {
  if (candidate < 0 ||
      static_cast<std::size_t>(candidate) >= emissions.vocab_size()) {
    throw AcousticError("invalid candidate " + std::to_string(candidate));
  }
  CtcLabelSyncScorer scorer(emissions);
  return scorer.NextScores(prefix)[candidate];
}

}  // namespace delayfuse
