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

// The `spd` command line: split, augment-preview, pretrain, padim fit|score,
// eval, toy-metrics and gen-corpus.

#ifndef SPOTDIFF_CLI_H_
#define SPOTDIFF_CLI_H_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace spotdiff {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// `args` excludes the program name. Returns the process exit code.
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);

// Reads an 8-bit PNM, replicating grey to three channels and resizing to
// size x size when needed.
class Image;
Image LoadRgb(const std::filesystem::path& path, int size);

}  // namespace spotdiff

#endif  // SPOTDIFF_CLI_H_
