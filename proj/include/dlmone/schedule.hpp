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

#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

namespace dlmone {

enum class ScheduleKind { kSqrt, kLinear, kCosine };

ScheduleKind parse_schedule_kind(std::string_view name);
std::string_view to_string(ScheduleKind kind);

/// Discrete-time variance-preserving noise schedule.
///
/// Coefficients are indexed by integer time t in [0, T). alpha(t)^2 +
/// sigma(t)^2 == 1 and alpha(t) / sigma(t) is strictly decreasing. The
/// coefficient arrays are never serialized; `{T, kind, s_offset}` is enough
/// to rebuild them bit-identically.
class NoiseSchedule {
 public:
  static constexpr int kDefaultSteps = 2000;
  static constexpr double kDefaultOffset = 1e-4;

  /// sqrt:   abar(t) = 1 - sqrt(t / T + s_offset)
  /// linear: DDPM betas rescaled by 1000 / T
  /// cosine: abar(t) = f(t + 1) / f(0), f(u) = cos^2((u/T + s) / (1 + s) pi/2),
  ///         realized through betas clipped at 0.999
  static NoiseSchedule build(int steps = kDefaultSteps,
                             ScheduleKind kind = ScheduleKind::kSqrt,
                             double s_offset = kDefaultOffset);

  /// Schedule from an explicit strictly decreasing abar sequence in (0, 1].
  /// Used for limits (abar = 1 gives sigma = 0) that `build` never produces.
  static NoiseSchedule from_alpha_bar(std::vector<double> alpha_bar);

  int steps() const { return static_cast<int>(alpha_.size()); }
  ScheduleKind kind() const { return kind_; }
  double s_offset() const { return s_offset_; }

  double alpha(int t) const { return alpha_.at(check(t)); }
  double sigma(int t) const { return sigma_.at(check(t)); }
  double alpha_bar(int t) const { return alpha_bar_.at(check(t)); }

  /// Float64 coefficient tables of length T.
  const torch::Tensor& alpha_table() const { return alpha_table_; }
  const torch::Tensor& sigma_table() const { return sigma_table_; }

  void check_time(int t) const { check(t); }

 private:
  NoiseSchedule(std::vector<double> alpha_bar, ScheduleKind kind,
                double s_offset);
  size_t check(int t) const;

  ScheduleKind kind_;
  double s_offset_;
  std::vector<double> alpha_bar_;
  std::vector<double> alpha_;
  std::vector<double> sigma_;
  torch::Tensor alpha_table_;
  torch::Tensor sigma_table_;
};

/// Isotropic Gaussian data distribution N(mean, scale^2 I), the analytic
/// world in which posterior means and scores have closed forms.
struct GaussianWorld {
  torch::Tensor mean;  // [d], float64
  double scale = 1.0;
};

/// e_t = alpha_t e + sigma_t noise on target positions; condition positions
/// (cond_mask true) are returned bit-identical. `e` is [B, L, d] (or [L, d]),
/// cond_mask is [B, L] (or [L]).
torch::Tensor forward_diffuse(const torch::Tensor& e, int t,
                              const torch::Tensor& cond_mask,
                              const torch::Tensor& noise,
                              const NoiseSchedule& sched);

/// Per-sample times: `t` is an int64 tensor of shape [B].
torch::Tensor forward_diffuse(const torch::Tensor& e, const torch::Tensor& t,
                              const torch::Tensor& cond_mask,
                              const torch::Tensor& noise,
                              const NoiseSchedule& sched);

/// Tweedie conversion from a posterior-mean prediction to the score:
/// s = (alpha_t e_hat - e_t) / sigma_t^2.
torch::Tensor score_from_denoiser(const torch::Tensor& e_hat,
                                  const torch::Tensor& e_t, int t,
                                  const NoiseSchedule& sched);

/// Inverse of score_from_denoiser: e_hat = (e_t + sigma_t^2 s) / alpha_t.
torch::Tensor denoiser_from_score(const torch::Tensor& score,
                                  const torch::Tensor& e_t, int t,
                                  const NoiseSchedule& sched);

/// E[e | e_t] for e ~ world, elementwise over the trailing dimension d.
torch::Tensor gaussian_posterior_mean(const GaussianWorld& world,
                                      const torch::Tensor& e_t, int t,
                                      const NoiseSchedule& sched);

/// grad log p(e_t) for the marginal N(alpha_t m, (alpha_t^2 s^2 + sigma_t^2) I).
torch::Tensor gaussian_score(const GaussianWorld& world,
                             const torch::Tensor& e_t, int t,
                             const NoiseSchedule& sched);

}  // namespace dlmone
