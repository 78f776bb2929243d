/*
 * Copyright 2026 The SpotDiff Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SPOTDIFF_ERROR_H_
#define SPOTDIFF_ERROR_H_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace spotdiff {

// Caller handed us something that violates a documented precondition.
// The CLI maps this family to exit code 2.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Curve metrics need both classes (or at least positives for AU-PR).
class CurveMetricsError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// Loss or gradient went non-finite during optimization.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, int64_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"),
        step_(step) {}
  int64_t step() const { return step_; }

 private:
  int64_t step_;
};

// Broken internal invariant, e.g. a fitted covariance that is not PD.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Dataset scan problems are collected rather than reported one at a time.
class DatasetScanError : public InvalidInput {
 public:
  explicit DatasetScanError(std::vector<std::string> issues)
      : InvalidInput(Join(issues)), issues_(std::move(issues)) {}
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  static std::string Join(const std::vector<std::string>& issues) {
    std::string out = "dataset scan found " + std::to_string(issues.size()) +
                      " issue(s)";
    for (const auto& s : issues) out += "\n  " + s;
    return out;
  }
  std::vector<std::string> issues_;
};

}  // namespace spotdiff

#endif  // SPOTDIFF_ERROR_H_
