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
#include <iosfwd>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "dlmone/data.hpp"
#include "dlmone/schedule.hpp"
#include "dlmone/seqmodel.hpp"

namespace dlmone {

struct TeacherConfig {
  int64_t steps = 20000;
  int64_t batch_size = 64;
  double lr = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  int64_t warmup_steps = 0;
  /// Linear decay of the learning rate to this fraction at the last step.
  double final_lr_fraction = 1.0;
  double ce_weight = 0.1;
  double grad_clip = 1.0;  // 0 disables clipping
  int64_t log_every = 100;
  uint64_t seed = 0;
};

/// A clean training batch; token_ids ([B, L]) is undefined for batches that
/// bypass tokens, which disables the rounding term.
struct TrainingBatch {
  EmbeddedSequence clean;
  torch::Tensor token_ids;
};

using BatchSource = std::function<TrainingBatch(int64_t batch_size, at::Generator& gen)>;

struct TeacherStats {
  int64_t steps = 0;
  double last_dsm = 0.0;
  double last_ce = 0.0;
};

/// Trains `net` in place with DSM on target positions plus `ce_weight` times
/// the lm-head cross-entropy of the prediction. Throws Error(kDivergence)
/// naming the step when the loss becomes non-finite.
TeacherStats train_denoiser(DenoiserNetwork& net, const BatchSource& source,
                            const NoiseSchedule& sched, const TeacherConfig& cfg,
                            std::ostream* log = nullptr);

/// Token-level pretraining; E is trained jointly.
TeacherStats pretrain_teacher(DenoiserNetwork& net, const std::vector<TokenPair>& train,
                              const NoiseSchedule& sched, const TeacherConfig& cfg,
                              std::ostream* log = nullptr);

/// Deterministic validation DSM: mean over pairs and a fixed time grid with
/// noise drawn from `seed`.
double validation_dsm(DenoiserNetwork& net, const std::vector<TokenPair>& pairs,
                      const NoiseSchedule& sched, uint64_t seed, int64_t n_times = 8);

enum class SamplerMode { kRenoise, kDdim };

SamplerMode parse_sampler_mode(std::string_view name);
std::string_view to_string(SamplerMode mode);

/// Evenly spaced integer times from `from` down to `to` with `count` entries.
std::vector<int> descending_ladder(int from, int to, int count);

/// Observer invoked on the state entering each denoiser evaluation.
using StepObserver = std::function<void(int step, int t, const EmbeddedSequence& state)>;

struct SampleResult {
  std::vector<TokenIds> targets;  // specials removed
  std::vector<TokenIds> full;     // all L positions
  torch::Tensor final_values;     // condition-clamped e_hat, [B, L, d]
  int64_t nfe = 0;
  double loop_seconds = 0.0;  // wall time of the denoiser loop alone
};

/// Iterative reference sampler. Target positions start from sigma_{T-1} z;
/// each step predicts e_hat, moves to the next ladder time, and re-clamps
/// the condition span to embed(src). Sample i draws noise from
/// (seed, first_index + i) only, so results do not depend on batching.
SampleResult teacher_sample(DenoiserNetwork& net, const std::vector<TokenIds>& sources,
                            int steps, const NoiseSchedule& sched, uint64_t seed,
                            uint64_t first_index = 0,
                            SamplerMode mode = SamplerMode::kRenoise,
                            const StepObserver& observer = {});

}  // namespace dlmone
