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
#include <string>

#include "dlmone/data.hpp"
#include "dlmone/distill.hpp"
#include "dlmone/schedule.hpp"
#include "dlmone/seqmodel.hpp"
#include "dlmone/teacher.hpp"

namespace dlmone {

struct ScheduleConfig {
  int steps = 2000;
  ScheduleKind kind = ScheduleKind::kSqrt;
  double s_offset = 1e-4;

  NoiseSchedule build() const { return NoiseSchedule::build(steps, kind, s_offset); }
};

/// Where pairs come from: a synthetic task, or JSONL files when
/// `train_file` is set.
struct DataConfig {
  TaskKind task = TaskKind::kReversal;
  int64_t vocab_size = 64;
  int64_t n_train = 4000;
  int64_t n_valid = 200;
  int64_t n_test = 200;
  int64_t min_len = 4;
  int64_t max_len = 10;
  uint64_t seed = 7;
  std::string train_file;
  std::string valid_file;
  std::string test_file;
};

struct GenerateConfig {
  int steps = 1;
  int mbr = 1;  // candidates per prompt; 1 disables MBR
  SamplerMode teacher_mode = SamplerMode::kRenoise;
  uint64_t seed = 1234;
  int64_t batch_size = 64;
};

struct BenchConfig {
  std::vector<int> steps_list = {1, 10, 100, 1000};
  int repeats = 3;
  int64_t batch = 1;
};

/// A full run record. Serialized as INI with sections [model], [schedule],
/// [data], [teacher], [distill], [generate], [bench]. The distill keys use
/// the hyperparameter names mu, t_min, t_max, t_init, a_sg_dsm, b_sg_adv,
/// a_g_sd, b_g_adv, lr_psi, lr_theta, stage.
struct RunConfig {
  ModelConfig model;
  ScheduleConfig schedule;
  DataConfig data;
  TeacherConfig teacher;
  DistillConfig distill;
  GenerateConfig generate;
  BenchConfig bench;
};

/// Missing keys keep their defaults; unknown sections or keys and
/// unparsable values throw Error(kConfig).
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical INI with every key written; parse_config(format_config(c))
/// reproduces c.
std::string format_config(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::filesystem::path& path);

/// SHA-256 of the canonical form.
std::string config_hash(const RunConfig& cfg);

/// Applies "section.key=value" overrides on top of `cfg`.
RunConfig apply_overrides(const RunConfig& cfg, const std::vector<std::string>& overrides);

}  // namespace dlmone
