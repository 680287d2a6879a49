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

#include "delayfuse/emissions.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>

#include "delayfuse/log_math.h"
#include "delayfuse/rng.h"

namespace delayfuse {

namespace {

constexpr double kRowTolerance = 1e-6;
constexpr double kMinNoise = 1e-3;
// Peak logit at noise 1; the peak is kPeakScale / max(noise, kMinNoise).
constexpr double kPeakScale = 4.0;
// Perturbation scales, in logit units.
constexpr double kJitter = 0.5;
// Mean of the exponentially distributed distractor strength.
constexpr double kDistractorScale = 2.86;

}  // namespace

EmissionMatrix::EmissionMatrix(std::size_t num_frames, std::size_t vocab_size,
                               std::vector<double> log_probs)
    : num_frames_(num_frames),
      vocab_size_(vocab_size),
      data_(std::move(log_probs)) {
  if (num_frames_ == 0 || vocab_size_ < 2) {
    throw AcousticError("emission matrix needs frames and at least 2 columns");
  }
  if (data_.size() != num_frames_ * vocab_size_) {
    throw AcousticError("emission data size does not match T x V");
  }
  for (std::size_t t = 0; t < num_frames_; ++t) {
    const auto r = row(t);
    for (double x : r) {
      if (!std::isfinite(x)) {
        throw AcousticError("non-finite emission at frame " + std::to_string(t));
      }
    }
    if (std::abs(LogSumExp(r)) > kRowTolerance) {
      throw AcousticError("emission row " + std::to_string(t) +
                          " is not normalized");
    }
  }
}

EmissionMatrix EmissionMatrix::Renormalized(std::size_t num_frames,
                                            std::size_t vocab_size,
                                            std::vector<double> log_scores,
                                            double max_deviation) {
  if (num_frames == 0 || log_scores.size() != num_frames * vocab_size) {
    throw AcousticError("emission data size does not match T x V");
  }
  for (std::size_t t = 0; t < num_frames; ++t) {
    std::span<double> r(log_scores.data() + t * vocab_size, vocab_size);
    const double z = LogSumExp(r);
    if (!std::isfinite(z) || std::abs(z) > max_deviation) {
      throw AcousticError("emission row " + std::to_string(t) +
                          " deviates from normalization by " +
                          std::to_string(z));
    }
    for (double& x : r) x -= z;
  }
  return EmissionMatrix(num_frames, vocab_size, std::move(log_scores));
}

EmissionMatrix EmissionMatrix::FromLogits(std::size_t num_frames,
                                          std::size_t vocab_size,
                                          std::vector<double> logits) {
  if (num_frames == 0 || logits.size() != num_frames * vocab_size) {
    throw AcousticError("logit data size does not match T x V");
  }
  for (std::size_t t = 0; t < num_frames; ++t) {
    std::span<double> r(logits.data() + t * vocab_size, vocab_size);
    const double z = LogSumExp(r);
    for (double& x : r) x -= z;
  }
  return EmissionMatrix(num_frames, vocab_size, std::move(logits));
}

EmissionMatrix EmissionMatrix::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw AcousticError("cannot open emission file " + path);
  std::size_t frames = 0;
  std::size_t vocab = 0;
  if (!(in >> frames >> vocab) || frames == 0 || vocab < 2) {
    throw AcousticError("bad emission header in " + path);
  }
  std::vector<double> data(frames * vocab);
  for (auto& x : data) {
    if (!(in >> x)) {
      throw AcousticError("emission file " + path + " is truncated");
    }
  }
  std::string extra;
  if (in >> extra) {
    throw AcousticError("emission file " + path + " has trailing data");
  }
  return Renormalized(frames, vocab, std::move(data), 1e-3);
}

void EmissionMatrix::Save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw AcousticError("cannot write emission file " + path);
  out << num_frames_ << ' ' << vocab_size_ << '\n';
  char buf[32];
  for (std::size_t t = 0; t < num_frames_; ++t) {
    const auto r = row(t);
    for (std::size_t v = 0; v < vocab_size_; ++v) {
      std::snprintf(buf, sizeof(buf), "%.9g", r[v]);
      if (v > 0) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

EmissionMatrix SynthEmissions(std::span<const TokenId> reference,
                              std::size_t vocab_size,
                              const SynthOptions& options) {
  if (reference.empty()) throw AcousticError("empty reference");
  if (options.min_frames_per_token < 1 ||
      options.max_frames_per_token < options.min_frames_per_token) {
    throw AcousticError("invalid frames-per-token range");
  }
  if (!(options.noise >= 0.0)) throw AcousticError("noise must be >= 0");
  if (vocab_size <= static_cast<std::size_t>(kNumSpecialTokens)) {
    throw AcousticError("vocabulary has no regular tokens");
  }
  for (TokenId id : reference) {
    if (id < kNumSpecialTokens || static_cast<std::size_t>(id) >= vocab_size) {
      throw AcousticError("reference token " + std::to_string(id) +
                          " is not a regular token");
    }
  }

  Rng rng(options.seed);
  const double peak = kPeakScale / std::max(options.noise, kMinNoise);
  const std::uint64_t num_regular = vocab_size - kNumSpecialTokens;

  // (symbol, distractor, distractor strength) per frame.
  struct Frame {
    TokenId symbol;
    TokenId distractor;
    double strength;
  };
  std::vector<Frame> frames;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const TokenId token = reference[i];
    TokenId distractor = static_cast<TokenId>(
        kNumSpecialTokens + static_cast<TokenId>(rng.Index(num_regular)));
    const double strength = -kDistractorScale * std::log1p(-rng.Uniform());
    const int n = rng.Range(options.min_frames_per_token,
                            options.max_frames_per_token);
    for (int k = 0; k < n; ++k) frames.push_back({token, distractor, strength});
    if (options.blank_prob > 0.0) {
      const bool repeat_next =
          i + 1 < reference.size() && reference[i + 1] == token;
      if (repeat_next || rng.Bernoulli(options.blank_prob)) {
        frames.push_back({kBlankId, kBlankId, 0.0});
      }
    }
  }

  std::vector<double> logits(frames.size() * vocab_size);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    double* r = logits.data() + t * vocab_size;
    for (std::size_t v = 0; v < vocab_size; ++v) {
      r[v] = kJitter * rng.Gaussian();
    }
    r[frames[t].symbol] += peak;
    if (frames[t].distractor != kBlankId &&
        frames[t].distractor != frames[t].symbol) {
      r[frames[t].distractor] += frames[t].strength;
    }
  }
  return EmissionMatrix::FromLogits(frames.size(), vocab_size,
                                    std::move(logits));
}

}  // namespace delayfuse
