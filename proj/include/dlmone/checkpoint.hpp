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
#include <map>
#include <string>

#include "dlmone/config.hpp"
#include "dlmone/data.hpp"
#include "dlmone/distill.hpp"
#include "dlmone/seqmodel.hpp"

namespace dlmone {

/// On disk: params.pt, config.ini, schedule.txt, vocab.txt, step.txt,
/// history.txt and network.txt (role, discriminator head flag).
struct Checkpoint {
  DenoiserNetwork net{nullptr};
  RunConfig config;
  Vocabulary vocab;
  int64_t step = 0;
  ValidationHistory history;
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);

/// Throws Error(kMissingCheckpoint) when `dir` or its params are absent.
/// The schedule record must agree with the config.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Run manifest: command, config hash, seeds, code version, extra entries.
void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const RunConfig& cfg, const std::map<std::string, std::string>& extra = {});

}  // namespace dlmone
