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

#include "delayfuse/dataset.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "delayfuse/rng.h"

namespace delayfuse {

namespace fs = std::filesystem;

std::vector<Utterance> GenerateDataset(std::span<const std::string> eval_sentences,
                                       const Tokenizer& asr_tok,
                                       const DatasetOptions& options) {
  if (options.count < 1) throw std::invalid_argument("count must be >= 1");
  if (eval_sentences.size() < options.count) {
    throw std::invalid_argument(
        "corpus too small: " + std::to_string(eval_sentences.size()) +
        " held-out sentences for " + std::to_string(options.count) +
        " utterances");
  }
  Rng rng(options.seed);
  std::vector<std::size_t> order(eval_sentences.size());
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < options.count; ++i) {
    std::swap(order[i], order[i + rng.Index(order.size() - i)]);
  }

  std::vector<Utterance> out;
  out.reserve(options.count);
  for (std::size_t i = 0; i < options.count; ++i) {
    const std::string& text = eval_sentences[order[i]];
    const auto ids = asr_tok.Encode(text);
    for (TokenId id : ids) {
      if (id == kUnkId) {
        throw TokenizationError("sentence has characters outside the ASR "
                                "vocabulary: " + text);
      }
    }
    SynthOptions synth;
    synth.min_frames_per_token = options.min_frames_per_token;
    synth.max_frames_per_token = options.max_frames_per_token;
    synth.noise = options.noise;
    synth.blank_prob = options.blank_prob;
    synth.seed = rng.Next();
    char id[32];
    std::snprintf(id, sizeof(id), "utt%04zu", i);
    out.push_back(
        {id, text, SynthEmissions(ids, asr_tok.vocab().size(), synth)});
  }
  return out;
}

std::vector<ManifestEntry> WriteDataset(std::span<const Utterance> utterances,
                                        const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root / "emissions");
  std::ofstream manifest(root / "manifest.tsv", std::ios::binary);
  if (!manifest) throw std::runtime_error("cannot write manifest in " + dir);
  std::vector<ManifestEntry> entries;
  for (const auto& u : utterances) {
    const std::string rel = "emissions/" + u.id + ".txt";
    u.emissions.Save((root / rel).string());
    manifest << u.id << '\t' << u.reference << '\t' << rel << '\n';
    entries.push_back({u.id, u.reference, rel});
  }
  return entries;
}

std::vector<ManifestEntry> ReadManifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 3 tab-separated fields");
    }
    ManifestEntry e;
    e.id = line.substr(0, a);
    e.reference = line.substr(a + 1, b - a - 1);
    fs::path p(line.substr(b + 1));
    e.emission_path = (p.is_absolute() ? p : base / p).string();
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace delayfuse
