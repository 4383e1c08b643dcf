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

#include "dlmone/sampler.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dlmone/common.hpp"

namespace dlmone {

std::vector<int> renoise_ladder(int t_init, int t_min, int steps) {
  if (steps < 1) fail(ErrorKind::kInvalidArgument, "steps must be >= 1, got " + std::to_string(steps));
  const int floor_t = std::max(t_min, t_init / steps);
  return descending_ladder(t_init, floor_t, steps);
}

SampleResult multi_step_generate(DenoiserNetwork& theta, const std::vector<TokenIds>& sources,
                                 int steps, const DistillConfig& cfg,
                                 const NoiseSchedule& sched, uint64_t seed,
                                 uint64_t first_index, const StepObserver& observer) {
  const auto ladder = renoise_ladder(cfg.t_init, cfg.t_min, steps);
  require(!sources.empty(), "multi_step_generate needs at least one source");
  torch::NoGradGuard no_grad;
  theta->eval();
  const auto nfe0 = theta->nfe();

  auto cond = theta->embed_condition(sources);
  const auto B = cond.batch();
  const std::vector<int64_t> shape = {cond.values.size(1), cond.values.size(2)};
  auto opts = cond.values.options();
  auto z = batch_noise(seed, first_index, B, 0, shape).to(opts);

  const auto loop_start = std::chrono::steady_clock::now();
  if (observer) {
    observer(0, ladder.front(),
             cond.with_values(replace_condition(z * sched.sigma(ladder.front()), cond.values,
                                                cond.cond_mask)));
  }
  auto e = generate_one_step(theta, sources, z, cfg, sched).values;
  for (int k = 1; k < steps; ++k) {
    const int t = ladder[static_cast<size_t>(k)];
    auto eps = batch_noise(seed, first_index, B, static_cast<uint64_t>(k), shape).to(opts);
    auto x = replace_condition(e * sched.alpha(t) + eps * sched.sigma(t), cond.values,
                               cond.cond_mask);
    auto state = cond.with_values(x);
    if (observer) observer(k, t, state);
    e = replace_condition(theta->denoise(state, t), cond.values, cond.cond_mask);
  }
  const auto loop_end = std::chrono::steady_clock::now();

  SampleResult res;
  res.loop_seconds = std::chrono::duration<double>(loop_end - loop_start).count();
  res.final_values = e;
  res.full = round_to_tokens(e, theta->embedding());
  res.targets.reserve(res.full.size());
  for (size_t i = 0; i < res.full.size(); ++i) {
    res.targets.push_back(extract_target(res.full[i], static_cast<int64_t>(sources[i].size()) + 1));
  }
  res.nfe = theta->nfe() - nfe0;
  return res;
}

size_t mbr_index(const std::vector<Sentence>& candidates) {
  if (candidates.empty()) fail(ErrorKind::kInvalidArgument, "mbr_select needs at least one candidate");
  const size_t n = candidates.size();
  if (n == 1) return 0;
  size_t best = 0;
  double best_risk = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < n; ++i) {
    double risk = 0.0;
    for (size_t j = 0; j < n; ++j) {
      if (j != i) risk += 1.0 - bleu(candidates[i], candidates[j]);
    }
    risk /= static_cast<double>(n - 1);
    if (risk < best_risk) {
      best_risk = risk;
      best = i;
    }
  }
  return best;
}

Sentence mbr_select(const std::vector<Sentence>& candidates) {
  return candidates[mbr_index(candidates)];
}

std::string hardware_descriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("model name", 0) == 0) {
      auto pos = line.find(':');
      if (pos != std::string::npos) cpu = line.substr(pos + 2);
      break;
    }
  }
  std::ostringstream os;
  os << cpu << "; torch threads=" << at::get_num_threads() << "; device=" << compute_device().str();
  return os.str();
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

LatencyReport benchmark_latency(const TimedSampler& run, const Vocabulary& vocab,
                                const BenchOptions& opts) {
  require(opts.repeats >= 3, "benchmark needs repeats >= 3");
  require(opts.batch >= 1, "benchmark batch must be positive");
  require(!opts.steps_list.empty(), "benchmark needs at least one step count");
  const int saved_threads = at::get_num_threads();
  at::set_num_threads(1);

  LatencyReport report;
  report.hardware = hardware_descriptor();
  report.note = "single worker, 1 intra-op thread; " + std::to_string(opts.warmup) +
                " warm-up run(s) excluded; times are seconds per sample";
  report.repeats = opts.repeats;
  WhitespaceTokenizer detok;
  const double per = static_cast<double>(opts.batch);
  for (int steps : opts.steps_list) {
    for (int w = 0; w < opts.warmup; ++w) run(steps);
    std::vector<double> total, loop;
    for (int r = 0; r < opts.repeats; ++r) {
      const auto start = std::chrono::steady_clock::now();
      auto res = run(steps);
      // Rounding already happened inside the sampler; detokenize here.
      size_t chars = 0;
      for (const auto& ids : res.targets) chars += detok.detokenize(vocab.decode(ids)).size();
      total.push_back(seconds_since(start) / per);
      loop.push_back(res.loop_seconds / per);
      (void)chars;
    }
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    LatencyRow row;
    row.steps = steps;
    row.mean_s = mean(total);
    double var = 0.0;
    for (double x : total) var += (x - row.mean_s) * (x - row.mean_s);
    row.std_s = std::sqrt(var / static_cast<double>(total.size() - 1));
    row.loop_s = mean(loop);
    row.overhead_s = row.mean_s - row.loop_s;
    report.rows.push_back(row);
  }
  at::set_num_threads(saved_threads);
  return report;
}

}  // namespace dlmone
