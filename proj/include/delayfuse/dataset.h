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

#ifndef DELAYFUSE_DATASET_H_
#define DELAYFUSE_DATASET_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "delayfuse/emissions.h"
#include "delayfuse/tokenization.h"

namespace delayfuse {

struct DatasetOptions {
  std::size_t count = 50;
  double noise = 0.0;
  int min_frames_per_token = 1;
  int max_frames_per_token = 3;
  double blank_prob = 0.5;
  std::uint64_t seed = 0;
};

struct Utterance {
  std::string id;
  std::string reference;
  EmissionMatrix emissions;
};

// Samples options.count distinct sentences from `eval_sentences` and
// synthesizes emissions for their ASR tokenization. Throws when the pool is
// smaller than the count or a sentence has out-of-vocabulary characters.
std::vector<Utterance> GenerateDataset(std::span<const std::string> eval_sentences,
                                       const Tokenizer& asr_tok,
                                       const DatasetOptions& options);

struct ManifestEntry {
  std::string id;
  std::string reference;
  // Absolute, or relative to the manifest's directory.
  std::string emission_path;
};

// Writes `dir`/manifest.tsv (id, reference, emission path) and one
// emission file per utterance under `dir`/emissions.
std::vector<ManifestEntry> WriteDataset(std::span<const Utterance> utterances,
                                        const std::string& dir);

// Emission paths come back resolved against the manifest's directory.
std::vector<ManifestEntry> ReadManifest(const std::string& path);

}  // namespace delayfuse

#endif  // DELAYFUSE_DATASET_H_
