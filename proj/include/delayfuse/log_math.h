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

#ifndef DELAYFUSE_LOG_MATH_H_
#define DELAYFUSE_LOG_MATH_H_

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace delayfuse {

// Natural-log space throughout. kLogZero is the log of probability zero.
inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline bool IsLogZero(double x) { return x == kLogZero; }

inline double LogAdd(double a, double b) {
  if (IsLogZero(a)) return b;
  if (IsLogZero(b)) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

inline double LogSumExp(std::span<const double> xs) {
  double hi = kLogZero;
  for (double x : xs) hi = std::max(hi, x);
  if (IsLogZero(hi)) return kLogZero;
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - hi);
  return hi + std::log(sum);
}

}  // namespace delayfuse

#endif  // DELAYFUSE_LOG_MATH_H_
