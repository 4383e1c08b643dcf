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
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "dlmone/data.hpp"
#include "dlmone/schedule.hpp"
#include "dlmone/seqmodel.hpp"

namespace dlmone {

/// Realization of the combined score-distillation weight.
///   kSidAdaptive: 1 / mean|e_hat_phi - e| over target elements (detached,
///                 one scalar per batch)
///   kConstant:    1
///   kSnr:         alpha_t^2 / sigma_t^4
enum class WeightMode { kSidAdaptive, kConstant, kSnr };

/// DSM weighting: kUniform is gamma_t = 1; kSnr is alpha_t^2 / sigma_t^2.
enum class GammaMode { kUniform, kSnr };

/// Whether the discriminator sees the score-matching time or its own draw.
enum class DiscTimeMode { kShared, kIndependent };

WeightMode parse_weight_mode(std::string_view name);
GammaMode parse_gamma_mode(std::string_view name);
DiscTimeMode parse_disc_time_mode(std::string_view name);
std::string_view to_string(WeightMode mode);
std::string_view to_string(GammaMode mode);
std::string_view to_string(DiscTimeMode mode);

struct DistillConfig {
  double mu = 1.2;
  int t_min = 0;
  int t_max = 1976;
  int t_init = 1490;
  double a_sg_dsm = 0.5;
  double b_sg_adv = 0.5;
  double a_g_sd = 0.5;
  double b_g_adv = 0.5;
  double lr_psi = 3e-5;
  double lr_theta = 1e-5;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  int stage = 1;
  int64_t budget_steps = 50000;
  int64_t val_every = 200;
  int64_t batch_size = 32;
  int64_t val_size = 0;  // 0 = whole validation split
  WeightMode weight_mode = WeightMode::kSidAdaptive;
  GammaMode gamma_mode = GammaMode::kUniform;
  DiscTimeMode disc_time = DiscTimeMode::kShared;
  double ema_decay = 0.0;  // 0 disables the EMA copy of theta
  uint64_t seed = 0;
  uint64_t val_seed = 1234;

  /// Throws unless 0 <= t_min < t_init <= t_max <= T - 1, coefficients are
  /// nonnegative, and the budget and learning rates are positive.
  void validate(int time_steps) const;
};

// Losses. All are means over target elements (condition and pad excluded)
// and return minimization-form scalars.

/// gamma * mean (e_hat - e)^2 over target elements.
torch::Tensor dsm_loss(const torch::Tensor& e_hat, const torch::Tensor& e,
                       const torch::Tensor& target_mask, double gamma = 1.0);

double gamma_weight(GammaMode mode, int t, const NoiseSchedule& sched);

/// Detached scalar weight standing in for omega_t alpha_t^2 / sigma_t^4.
torch::Tensor sid_weight(WeightMode mode, const torch::Tensor& e_hat_phi,
                         const torch::Tensor& e, const torch::Tensor& target_mask,
                         int t, const NoiseSchedule& sched);

/// w * mean[(1 - mu) (e_phi - e_psi)^2 + (e_phi - e_psi)(e_psi - e)] over
/// target elements. Gradients flow through every argument that carries them.
torch::Tensor sid_loss(const torch::Tensor& e_hat_phi, const torch::Tensor& e_hat_psi,
                       const torch::Tensor& e, const torch::Tensor& target_mask,
                       double mu, const torch::Tensor& weight);

/// 1/2 [BCE(real, 1) + BCE(fake, 0)], the negated adversarial objective of
/// the score estimator. Fake logits should come from detached generator
/// output.
torch::Tensor disc_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits);

/// BCE(fake, 1), the negated generator adversarial objective. When
/// `training`, logits without a gradient path are rejected.
torch::Tensor gen_adv_loss(const torch::Tensor& fake_logits, bool training = true);

/// Network-level DSM of the estimator on an already-noised batch.
torch::Tensor dsm_loss(DenoiserNetwork& psi, const EmbeddedSequence& clean,
                       const EmbeddedSequence& noised, int t, GammaMode gamma_mode,
                       const NoiseSchedule& sched);

/// Network-level SiD loss at time t for generated `e` and its noised `e_t`.
torch::Tensor sid_loss(DenoiserNetwork& phi, DenoiserNetwork& psi, const EmbeddedSequence& e,
                       const EmbeddedSequence& e_t, int t, double mu, WeightMode weight_mode,
                       const NoiseSchedule& sched);

/// Overwrites the condition span of `e_gen` with `e_cond`.
torch::Tensor replace_condition(const torch::Tensor& e_gen, const torch::Tensor& e_cond,
                                const torch::Tensor& cond_mask);
EmbeddedSequence replace_condition(const EmbeddedSequence& e_gen, const EmbeddedSequence& e_cond);

/// e = G_theta(c, z): condition span from embed(src), target span sigma_{t_init} z,
/// one denoiser pass at t_init, condition span replaced by the true embedding.
/// `z` is [B, L, d]. Gradients flow into theta unless under NoGradGuard.
EmbeddedSequence generate_one_step(DenoiserNetwork& theta, const std::vector<TokenIds>& sources,
                                   const torch::Tensor& z, int t_init,
                                   const NoiseSchedule& sched);

/// Same, with the t_init range check against a distillation config.
EmbeddedSequence generate_one_step(DenoiserNetwork& theta, const std::vector<TokenIds>& sources,
                                   const torch::Tensor& z, const DistillConfig& cfg,
                                   const NoiseSchedule& sched);

/// Optional classifier-free-guidance hook on the teacher:
/// (1 + w) e_phi(c) - w e_phi(no condition). w = 0 is plain denoise.
torch::Tensor guided_teacher_denoise(DenoiserNetwork& phi, const EmbeddedSequence& e_t, int t,
                                     double guidance_scale);

struct ValidationRecord {
  int64_t step = 0;
  double bleu = 0.0;
  bool operator==(const ValidationRecord&) const = default;
};
using ValidationHistory = std::vector<ValidationRecord>;

/// Index of the maximum BLEU, earliest step on ties. Empty history -> nullopt.
std::optional<size_t> best_index(const ValidationHistory& history);

struct StepLosses {
  int t_psi = 0;
  int t_theta = 0;
  double dsm = 0.0;
  double disc = 0.0;
  double psi_total = 0.0;
  double sid = 0.0;
  double adv = 0.0;
  double theta_total = 0.0;
};

std::string format_losses(int64_t step, const StepLosses& l);

struct DistillState {
  DenoiserNetwork phi{nullptr};
  DenoiserNetwork theta{nullptr};
  DenoiserNetwork psi{nullptr};
  DenoiserNetwork ema{nullptr};
  std::unique_ptr<torch::optim::AdamW> opt_theta;
  std::unique_ptr<torch::optim::AdamW> opt_psi;
  int64_t step = 0;
  ValidationHistory history;
  std::string embedding_hash;
  at::Generator gen;
};

/// theta <- phi (or <- `init_theta` for stage >= 2), psi <- phi with a fresh
/// discriminator head, phi frozen, E frozen in all three.
DistillState init_state(const DenoiserNetwork& phi, const DistillConfig& cfg,
                        const DenoiserNetwork* init_theta = nullptr);

/// One psi phase followed by one theta phase. Fake conditions are drawn
/// uniformly from `cond_pool`.
StepLosses distill_step(DistillState& state, const std::vector<TokenPair>& real_batch,
                        const std::vector<TokenIds>& cond_pool, const DistillConfig& cfg,
                        const NoiseSchedule& sched);

/// One-step validation BLEU with per-sample noise from (val_seed, index).
/// Also reports the fraction of degenerate generations (all-[PAD] or a
/// single unigram covering more than 90% of tokens) through `degenerate`.
double validation_bleu(DenoiserNetwork& theta, const std::vector<TokenPair>& pairs,
                       const DistillConfig& cfg, const NoiseSchedule& sched,
                       double* degenerate = nullptr);

struct StageResult {
  DenoiserNetwork theta{nullptr};  // best validation checkpoint
  ValidationHistory history;
  int64_t best_step = 0;
  int64_t steps_run = 0;
  std::string embedding_hash_before;
  std::string embedding_hash_after;
};

/// Runs `budget_steps` distillation steps, validating every `val_every`
/// steps, and returns the best validation checkpoint. Stage >= 2 requires
/// `stage1_theta`. Loss lines (key=value) go to `log` when provided.
StageResult run_stage(const DistillConfig& cfg, const DenoiserNetwork& phi,
                      const DenoiserNetwork* stage1_theta,
                      const std::vector<TokenPair>& train,
                      const std::vector<TokenPair>& valid, const NoiseSchedule& sched,
                      std::ostream* log = nullptr);

}  // namespace dlmone
