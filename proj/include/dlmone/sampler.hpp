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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dlmone/data.hpp"
#include "dlmone/distill.hpp"
#include "dlmone/metrics.hpp"
#include "dlmone/schedule.hpp"
#include "dlmone/seqmodel.hpp"
#include "dlmone/teacher.hpp"

namespace dlmone {

/// Re-noise ladder: `steps` evenly spaced integers from t_init down to
/// max(t_min, t_init / steps).
std::vector<int> renoise_ladder(int t_init, int t_min, int steps);

/// Student refinement. Step 1 is generate_one_step at t_init; each later
/// step re-noises the previous prediction to the next ladder time, clamps the
/// condition span, and denoises again. NFE equals `steps`. Sample i uses
/// noise from (seed, first_index + i) only: stream 0 is the generator input,
/// stream k the re-noise draw of step k + 1.
SampleResult multi_step_generate(DenoiserNetwork& theta, const std::vector<TokenIds>& sources,
                                 int steps, const DistillConfig& cfg,
                                 const NoiseSchedule& sched, uint64_t seed,
                                 uint64_t first_index = 0, const StepObserver& observer = {});

/// Index of argmin_i mean_{j != i} (1 - BLEU(c_i, c_j)); lowest index on ties.
size_t mbr_index(const std::vector<Sentence>& candidates);
Sentence mbr_select(const std::vector<Sentence>& candidates);

/// One timed generation run over a fixed batch. Returns the sampler output;
/// the benchmark adds rounding and detokenization cost on top.
using TimedSampler = std::function<SampleResult(int steps)>;

struct BenchOptions {
  std::vector<int> steps_list = {1, 10, 100, 1000};
  int repeats = 3;   // >= 3
  int warmup = 1;    // untimed runs per step count
  int64_t batch = 1; // samples per run, for the per-sample division
};

/// Times `run` for each step count. End-to-end time covers sampling,
/// rounding and detokenization through `vocab`; loop time is the denoiser
/// loop alone; overhead is the difference. Rows report per-sample seconds.
/// Runs pinned to one intra-op thread.
LatencyReport benchmark_latency(const TimedSampler& run, const Vocabulary& vocab,
                                const BenchOptions& opts);

/// CPU model, thread count, and device.
std::string hardware_descriptor();

}  // namespace dlmone
