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

#include "dlmone/schedule.hpp"

#include <cmath>
#include <numbers>

#include "dlmone/common.hpp"

namespace dlmone {

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "sqrt") return ScheduleKind::kSqrt;
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "cosine") return ScheduleKind::kCosine;
  fail(ErrorKind::kInvalidArgument,
       "unknown schedule kind '" + std::string(name) + "'");
}

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kSqrt: return "sqrt";
    case ScheduleKind::kLinear: return "linear";
    case ScheduleKind::kCosine: return "cosine";
  }
  return "?";
}

NoiseSchedule NoiseSchedule::build(int steps, ScheduleKind kind,
                                   double s_offset) {
  require(steps >= 2, "schedule needs T >= 2, got " + std::to_string(steps));
  require(s_offset > 0.0 && s_offset < 0.1,
          "s_offset must lie in (0, 0.1), got " + std::to_string(s_offset));

  const double T = steps;
  std::vector<double> abar(steps);
  switch (kind) {
    case ScheduleKind::kSqrt:
      for (int t = 0; t < steps; ++t) {
        abar[t] = 1.0 - std::sqrt(t / T + s_offset);
      }
      break;
    case ScheduleKind::kLinear: {
      const double scale = 1000.0 / T;
      const double lo = scale * 1e-4;
      const double hi = scale * 0.02;
      double prod = 1.0;
      for (int t = 0; t < steps; ++t) {
        const double beta = lo + (hi - lo) * t / (T - 1.0);
        prod *= 1.0 - beta;
        abar[t] = prod;
      }
      break;
    }
    case ScheduleKind::kCosine: {
      auto f = [&](double u) {
        const double c =
            std::cos((u / T + s_offset) / (1.0 + s_offset) * std::numbers::pi / 2);
        return c * c;
      };
      double prod = 1.0;
      for (int t = 0; t < steps; ++t) {
        const double beta = std::min(1.0 - f(t + 1) / f(t), 0.999);
        prod *= 1.0 - beta;
        abar[t] = prod;
      }
      break;
    }
  }
  return NoiseSchedule(std::move(abar), kind, s_offset);
}

NoiseSchedule NoiseSchedule::from_alpha_bar(std::vector<double> alpha_bar) {
  require(alpha_bar.size() >= 2, "schedule needs at least two steps");
  return NoiseSchedule(std::move(alpha_bar), ScheduleKind::kSqrt, 0.0);
}

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_bar, ScheduleKind kind,
                             double s_offset)
    : kind_(kind), s_offset_(s_offset), alpha_bar_(std::move(alpha_bar)) {
  alpha_.resize(alpha_bar_.size());
  sigma_.resize(alpha_bar_.size());
  for (size_t t = 0; t < alpha_bar_.size(); ++t) {
    const double ab = alpha_bar_[t];
    require(ab > 0.0 && ab <= 1.0, "alpha_bar must lie in (0, 1]");
    if (t > 0) require(ab < alpha_bar_[t - 1], "alpha_bar must strictly decrease");
    alpha_[t] = std::sqrt(ab);
    sigma_[t] = std::sqrt(1.0 - ab);
  }
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  alpha_table_ = torch::tensor(alpha_, opts);
  sigma_table_ = torch::tensor(sigma_, opts);
}

size_t NoiseSchedule::check(int t) const {
  if (t < 0 || t >= steps()) {
    fail(ErrorKind::kInvalidArgument,
         "time index " + std::to_string(t) + " outside [0, " +
             std::to_string(steps() - 1) + "]");
  }
  return static_cast<size_t>(t);
}

namespace {

// Broadcast a [B, L] (or [L]) mask against values of rank mask.dim() + 1.
torch::Tensor expand_mask(const torch::Tensor& e, const torch::Tensor& mask) {
  require(mask.dim() + 1 == e.dim() &&
              mask.sizes() == e.sizes().slice(0, e.dim() - 1),
          "cond_mask shape does not match embedding shape");
  return mask.to(torch::kBool).unsqueeze(-1);
}

}  // namespace

torch::Tensor forward_diffuse(const torch::Tensor& e, int t,
                              const torch::Tensor& cond_mask,
                              const torch::Tensor& noise,
                              const NoiseSchedule& sched) {
  require(noise.sizes() == e.sizes(), "noise shape does not match embedding");
  const double a = sched.alpha(t);
  const double s = sched.sigma(t);
  auto noised = e * a + noise * s;
  return torch::where(expand_mask(e, cond_mask), e, noised);
}

torch::Tensor forward_diffuse(const torch::Tensor& e, const torch::Tensor& t,
                              const torch::Tensor& cond_mask,
                              const torch::Tensor& noise,
                              const NoiseSchedule& sched) {
  require(noise.sizes() == e.sizes(), "noise shape does not match embedding");
  require(e.dim() == 3 && t.dim() == 1 && t.size(0) == e.size(0),
          "per-sample times need e [B, L, d] and t [B]");
  const auto lo = t.min().item<int64_t>();
  const auto hi = t.max().item<int64_t>();
  sched.check_time(static_cast<int>(lo));
  sched.check_time(static_cast<int>(hi));
  auto idx = t.to(torch::kCPU, torch::kLong);
  auto a = sched.alpha_table().index_select(0, idx).to(e.options()).view({-1, 1, 1});
  auto s = sched.sigma_table().index_select(0, idx).to(e.options()).view({-1, 1, 1});
  auto noised = e * a + noise * s;
  return torch::where(expand_mask(e, cond_mask), e, noised);
}

torch::Tensor score_from_denoiser(const torch::Tensor& e_hat,
                                  const torch::Tensor& e_t, int t,
                                  const NoiseSchedule& sched) {
  require(e_hat.sizes() == e_t.sizes(), "score conversion shape mismatch");
  const double s = sched.sigma(t);
  if (s == 0.0) {
    fail(ErrorKind::kInvalidArgument,
         "score undefined at t=" + std::to_string(t) + " (sigma_t = 0)");
  }
  return (e_hat * sched.alpha(t) - e_t) / (s * s);
}

torch::Tensor denoiser_from_score(const torch::Tensor& score,
                                  const torch::Tensor& e_t, int t,
                                  const NoiseSchedule& sched) {
  require(score.sizes() == e_t.sizes(), "score conversion shape mismatch");
  const double s = sched.sigma(t);
  return (e_t + score * (s * s)) / sched.alpha(t);
}

torch::Tensor gaussian_posterior_mean(const GaussianWorld& world,
                                      const torch::Tensor& e_t, int t,
                                      const NoiseSchedule& sched) {
  const double a = sched.alpha(t);
  const double s = sched.sigma(t);
  const double v = world.scale * world.scale;
  const double denom = a * a * v + s * s;
  auto m = world.mean.to(e_t.options());
  return (m * (s * s) + e_t * (a * v)) / denom;
}

torch::Tensor gaussian_score(const GaussianWorld& world,
                             const torch::Tensor& e_t, int t,
                             const NoiseSchedule& sched) {
  const double a = sched.alpha(t);
  const double s = sched.sigma(t);
  const double var = a * a * world.scale * world.scale + s * s;
  auto m = world.mean.to(e_t.options());
  return -(e_t - m * a) / var;
}

}  // namespace dlmone
