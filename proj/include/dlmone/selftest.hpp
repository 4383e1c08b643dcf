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
#include <string>
#include <utility>
#include <vector>

namespace dlmone {

// Analytic oracles shared by the selftest subcommand and the test suites.

struct GaussianOracleOptions {
  int64_t dim = 16;
  int64_t seq_len = 8;
  double scale = 0.5;         // per-coordinate std of the clean data
  int64_t hidden = 64;
  int64_t layers = 2;
  int64_t heads = 4;
  int64_t train_steps = 3000;
  int64_t batch = 64;
  double lr = 2e-3;
  int64_t eval_samples = 512;
  std::vector<int> times = {200, 1000, 1800};
  uint64_t seed = 0;
};

struct GaussianOracleResult {
  std::vector<std::pair<int, double>> errors;  // (t, normalized error)
  double seconds = 0.0;
};

/// Trains a denoiser on Gaussian data N(m, scale^2 I) and reports, per time,
/// ||e_hat - posterior mean|| / ||posterior mean|| over fresh draws.
GaussianOracleResult gaussian_dsm_oracle(const GaussianOracleOptions& opts,
                                         std::ostream* log = nullptr);

/// Max relative discrepancy between the weighted score-difference integrand
/// and its posterior-mean form, over `draws` random (e_t, t) pairs in float64.
double tweedie_consistency_error(int64_t draws, uint64_t seed);

struct FixedPointResult {
  double max_abs_loss = 0.0;
  double max_abs_grad = 0.0;  // central finite differences w.r.t. e
};

/// SiD loss at the fixed point: analytic e_hat_phi = e_hat_psi, generator
/// samples drawn from the teacher distribution.
FixedPointResult sid_fixed_point(double mu, uint64_t seed);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// The analytic-oracle suite: losses, metrics, conditioning, Tweedie,
/// fixed point and the Gaussian denoiser oracle.
std::vector<CheckResult> run_selftest(std::ostream* log = nullptr);

}  // namespace dlmone
