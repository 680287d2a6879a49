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

#ifndef DELAYFUSE_EMISSIONS_H_
#define DELAYFUSE_EMISSIONS_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "delayfuse/tokenization.h"

namespace delayfuse {

class AcousticError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per-frame log-probabilities over the ASR vocabulary, blank at column 0.
// Every row logsumexps to 0 within 1e-6 and every entry is finite.
class EmissionMatrix {
 public:
  EmissionMatrix() = default;

  // `log_probs` is row-major, frames x vocab_size, already normalized.
  EmissionMatrix(std::size_t num_frames, std::size_t vocab_size,
                 std::vector<double> log_probs);

  // Re-normalizes each row of unnormalized log-scores. Throws when a row's
  // logsumexp deviates from 0 by more than `max_deviation`.
  static EmissionMatrix Renormalized(std::size_t num_frames,
                                     std::size_t vocab_size,
                                     std::vector<double> log_scores,
                                     double max_deviation);

  // Log-softmax of each row of `logits`.
  static EmissionMatrix FromLogits(std::size_t num_frames,
                                   std::size_t vocab_size,
                                   std::vector<double> logits);

  // Text format: "T V" then T lines of V values with 9 significant digits.
  static EmissionMatrix Load(const std::string& path);
  void Save(const std::string& path) const;

  std::size_t num_frames() const { return num_frames_; }
  std::size_t vocab_size() const { return vocab_size_; }
  std::span<const double> row(std::size_t t) const {
    return {data_.data() + t * vocab_size_, vocab_size_};
  }
  double at(std::size_t t, TokenId v) const {
    return data_[t * vocab_size_ + static_cast<std::size_t>(v)];
  }
  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t num_frames_ = 0;
  std::size_t vocab_size_ = 0;
  std::vector<double> data_;
};

struct SynthOptions {
  int min_frames_per_token = 1;
  int max_frames_per_token = 3;
  // 0 gives near one-hot rows.
  double noise = 0.0;
  // Probability of a blank frame after each token. A blank frame is always
  // inserted between repeated tokens when this is positive.
  double blank_prob = 0.5;
  std::uint64_t seed = 0;
};

// Synthetic CTC output for `reference` (ASR token ids, no specials). Each
// token spans a random number of frames in the configured range. A frame's
// logits are a peak of 4/max(noise, 1e-3) on its true symbol plus a seeded
// perturbation: Gaussian jitter on every column and, per token, a distractor
// symbol with exponentially distributed strength. Confusions stay
// consistent across a token's frames.
EmissionMatrix SynthEmissions(std::span<const TokenId> reference,
                              std::size_t vocab_size,
                              const SynthOptions& options);

}  // namespace delayfuse

#endif  // DELAYFUSE_EMISSIONS_H_
