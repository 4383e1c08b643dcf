// Copyright 2026 The dlmone Authors.
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

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dlmone/common.hpp"
#include "dlmone/config.hpp"
#include "dlmone/data.hpp"

namespace dlmone {

/// Process exit statuses.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,       // anything not covered below
  kExitUsage = 2,         // unknown subcommand or bad flags
  kExitConfig = 3,
  kExitMissingCheckpoint = 4,
  kExitData = 5,
  kExitDivergence = 6,
  kExitIo = 7,
  kExitInvalidArgument = 8,
  kExitSelftest = 9,
};

int exit_code_for(ErrorKind kind);

/// Parses argv (without the program name) and runs one subcommand:
///   pretrain-teacher, distill, generate, evaluate, bench, selftest.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Encoded train / valid / test splits with their vocabulary.
struct Dataset {
  Vocabulary vocab;
  std::vector<TokenPair> train;
  std::vector<TokenPair> valid;
  std::vector<TokenPair> test;
};

/// Synthesizes or loads the splits described by `cfg`. File-backed data
/// builds the vocabulary from the training file, capped at vocab_size.
Dataset prepare_dataset(const DataConfig& cfg, int64_t seq_len);

/// One line of a generations file.
struct GenerationRecord {
  std::string src;
  std::string hyp;
  std::optional<std::string> ref;
  std::vector<std::string> candidates;  // MBR pool, when K > 1
};

void write_generations(const std::filesystem::path& path,
                       const std::vector<GenerationRecord>& records);
std::vector<GenerationRecord> read_generations(const std::filesystem::path& path);

/// {"src": str, "trg": str?} per line; "trg" becomes the reference.
std::vector<GenerationRecord> read_prompts(const std::filesystem::path& path);

}  // namespace dlmone
