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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "delayfuse/log_math.h"
#include "delayfuse/ngram_model.h"

namespace delayfuse {

namespace {

// ARPA convention for log10(0).
constexpr double kArpaLogZero = -99.0;

std::string FormatLog10(double natural_log) {
  if (IsLogZero(natural_log)) return "-99";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", natural_log / std::numbers::ln10);
  return buf;
}

double ParseLog10(const std::string& field, int line_no) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != field.size() || !std::isfinite(v)) {
    throw LmError("ARPA line " + std::to_string(line_no) +
                  ": bad number '" + field + "'");
  }
  if (v <= kArpaLogZero) return kLogZero;
  return v * std::numbers::ln10;
}

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void WriteArpa(const NGramModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LmError("cannot write ARPA file " + path);
  const auto& vocab = model.vocab();
  const auto& grams = model.grams();
  const int order = model.order();

  out << "\\data\\\n";
  for (int k = 0; k < order; ++k) {
    out << "ngram " << (k + 1) << "=" << grams[k].size() << "\n";
  }
  for (int k = 0; k < order; ++k) {
    out << "\n\\" << (k + 1) << "-grams:\n";
    // Sorted by id sequence so that files are byte-identical across runs.
    std::vector<const NGramModel::Table::value_type*> rows;
    rows.reserve(grams[k].size());
    for (const auto& row : grams[k]) rows.push_back(&row);
    std::sort(rows.begin(), rows.end(),
              [](auto* a, auto* b) { return a->first < b->first; });
    for (const auto* row : rows) {
      out << FormatLog10(row->second.log_prob) << '\t';
      for (std::size_t i = 0; i < row->first.size(); ++i) {
        if (i > 0) out << ' ';
        out << vocab.token(row->first[i]);
      }
      if (k + 1 < order) out << '\t' << FormatLog10(row->second.backoff);
      out << '\n';
    }
  }
  out << "\n\\end\\\n";
  if (!out) throw LmError("failed writing ARPA file " + path);
}

std::unique_ptr<NGramModel> ReadArpa(const std::string& path,
                                     std::shared_ptr<const Vocabulary> vocab) {
  if (!vocab) throw LmError("ARPA reader needs a vocabulary");
  std::ifstream in(path);
  if (!in) throw LmError("cannot open ARPA file " + path);

  std::string line;
  int line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    line = Trim(line);
    return true;
  };

  bool found_data = false;
  while (next_line()) {
    if (line == "\\data\\") {
      found_data = true;
      break;
    }
  }
  if (!found_data) throw LmError("ARPA file " + path + " has no \\data\\ header");

  std::map<int, std::size_t> declared;
  while (next_line()) {
    if (line.empty()) {
      if (!declared.empty()) break;
      continue;
    }
    if (line.rfind("ngram ", 0) != 0) break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw LmError("ARPA line " + std::to_string(line_no) + ": bad count line");
    }
    const int k = std::stoi(line.substr(6, eq - 6));
    const long long count = std::stoll(line.substr(eq + 1));
    if (k < 1 || k > 5 || count < 0 || declared.count(k)) {
      throw LmError("ARPA line " + std::to_string(line_no) + ": bad count line");
    }
    declared[k] = static_cast<std::size_t>(count);
  }
  if (declared.empty()) throw LmError("ARPA header declares no n-gram orders");
  const int order = declared.rbegin()->first;
  for (int k = 1; k <= order; ++k) {
    if (!declared.count(k)) {
      throw LmError("ARPA header is missing the " + std::to_string(k) +
                    "-gram count");
    }
  }

  std::vector<NGramModel::Table> grams(order);
  std::vector<bool> seen_section(order, false);
  bool ended = false;
  int section = 0;
  do {
    if (line.empty()) continue;
    if (line == "\\end\\") {
      ended = true;
      break;
    }
    if (line.front() == '\\') {
      int k = 0;
      char tail[16] = {0};
      if (std::sscanf(line.c_str(), "\\%d-grams%15s", &k, tail) != 2 ||
          std::string(tail) != ":" || k < 1 || k > order) {
        throw LmError("ARPA line " + std::to_string(line_no) +
                      ": unexpected section '" + line + "'");
      }
      if (seen_section[k - 1]) {
        throw LmError("ARPA file repeats the \\" + std::to_string(k) +
                      "-grams: section");
      }
      seen_section[k - 1] = true;
      section = k;
      continue;
    }
    if (section == 0) {
      throw LmError("ARPA line " + std::to_string(line_no) +
                    ": entry outside any section");
    }
    std::istringstream fields(line);
    std::vector<std::string> parts;
    for (std::string f; fields >> f;) parts.push_back(f);
    const std::size_t need = static_cast<std::size_t>(section) + 1;
    if (parts.size() != need && parts.size() != need + 1) {
      throw LmError("ARPA line " + std::to_string(line_no) + ": expected " +
                    std::to_string(section) + " words");
    }
    NGramModel::Entry entry;
    entry.log_prob = ParseLog10(parts[0], line_no);
    if (parts.size() == need + 1) {
      entry.backoff = ParseLog10(parts.back(), line_no);
    }
    std::vector<TokenId> key;
    key.reserve(section);
    for (int i = 1; i <= section; ++i) {
      if (!vocab->Contains(parts[i])) {
        throw LmError("ARPA line " + std::to_string(line_no) + ": word '" +
                      parts[i] + "' is not in the vocabulary");
      }
      key.push_back(vocab->Find(parts[i]));
    }
    grams[section - 1][std::move(key)] = entry;
  } while (next_line());

  if (!ended) throw LmError("ARPA file " + path + " lacks \\end\\");
  for (int k = 1; k <= order; ++k) {
    const std::size_t found = grams[k - 1].size();
    if (k == 1 && found == 0) {
      throw LmError("ARPA \\1-grams: section is empty");
    }
    if (found != declared[k]) {
      throw LmError("ARPA \\" + std::to_string(k) +
                    "-grams: header declares " + std::to_string(declared[k]) +
                    " entries, body has " + std::to_string(found));
    }
  }
  return std::make_unique<NGramModel>(order, std::move(vocab),
                                      std::move(grams));
}

}  // namespace delayfuse
