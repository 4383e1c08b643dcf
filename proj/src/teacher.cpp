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

#include "dlmone/teacher.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "dlmone/common.hpp"

namespace dlmone {

namespace {

torch::Tensor masked_mean_sq(const torch::Tensor& diff, const torch::Tensor& mask) {
  auto m = mask.to(diff.scalar_type()).unsqueeze(-1);
  const auto count = m.sum() * diff.size(-1);
  return (diff.pow(2) * m).sum() / count.clamp_min(1.0);
}

torch::Tensor layout_ids(const std::vector<TokenPair>& pairs, int64_t seq_len) {
  std::vector<int64_t> ids;
  ids.reserve(pairs.size() * static_cast<size_t>(seq_len));
  for (const auto& p : pairs) {
    auto seq = layout_tokens(p.src, p.trg, seq_len);
    ids.insert(ids.end(), seq.begin(), seq.end());
  }
  return torch::tensor(ids, torch::kLong).view({static_cast<int64_t>(pairs.size()), seq_len});
}

}  // namespace

TeacherStats train_denoiser(DenoiserNetwork& net, const BatchSource& source,
                            const NoiseSchedule& sched, const TeacherConfig& cfg,
                            std::ostream* log) {
  require(cfg.batch_size > 0, "teacher batch_size must be positive");
  require(cfg.steps >= 0, "teacher steps must be non-negative");
  require(sched.steps() == net->config().time_steps,
          "schedule length does not match the network's time range");
  net->train();
  net->set_requires_grad(true);
  net->set_embedding_frozen(false);
  auto params = net->trainable_parameters(/*include_embedding=*/true);
  torch::optim::AdamW opt(params, torch::optim::AdamWOptions(cfg.lr)
                                      .betas({cfg.beta1, cfg.beta2})
                                      .weight_decay(cfg.weight_decay));
  auto gen = make_generator(cfg.seed);
  TeacherStats stats;
  const auto T = sched.steps();
  for (int64_t step = 1; step <= cfg.steps; ++step) {
    double lr = cfg.lr;
    if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps) {
      lr *= static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    } else if (cfg.final_lr_fraction < 1.0 && cfg.steps > cfg.warmup_steps) {
      const double progress = static_cast<double>(step - cfg.warmup_steps) /
                              static_cast<double>(cfg.steps - cfg.warmup_steps);
      lr *= 1.0 - (1.0 - cfg.final_lr_fraction) * progress;
    }
    for (auto& group : opt.param_groups()) {
      static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
    }

    auto batch = source(cfg.batch_size, gen);
    const auto& clean = batch.clean;
    const auto B = clean.batch();
    auto dev = clean.values.device();
    auto t = torch::randint(T, {B}, gen, torch::kLong).to(dev);
    auto noise = torch::randn(clean.values.sizes(), gen).to(clean.values.options());
    auto noised = clean.with_values(
        forward_diffuse(clean.values, t, clean.cond_mask, noise, sched));
    auto e_hat = net->denoise(noised, t);
    auto target = clean.target_mask();
    auto dsm = masked_mean_sq(e_hat - clean.values, target);
    auto loss = dsm;
    torch::Tensor ce;
    if (batch.token_ids.defined() && cfg.ce_weight > 0.0) {
      auto logits = net->logits(e_hat);
      auto flat_mask = target.reshape({-1});
      auto sel = flat_mask.nonzero().squeeze(1);
      ce = torch::nn::functional::cross_entropy(
          logits.reshape({-1, logits.size(-1)}).index_select(0, sel),
          batch.token_ids.to(dev).reshape({-1}).index_select(0, sel));
      loss = loss + ce * cfg.ce_weight;
    }
    const double loss_v = loss.item<double>();
    if (!std::isfinite(loss_v)) {
      fail(ErrorKind::kDivergence,
           "teacher loss became non-finite at step " + std::to_string(step));
    }
    opt.zero_grad();
    loss.backward();
    if (cfg.grad_clip > 0.0) torch::nn::utils::clip_grad_norm_(params, cfg.grad_clip);
    opt.step();

    stats.steps = step;
    stats.last_dsm = dsm.item<double>();
    stats.last_ce = ce.defined() ? ce.item<double>() : 0.0;
    if (log && cfg.log_every > 0 && step % cfg.log_every == 0) {
      *log << "step=" << step << " dsm=" << stats.last_dsm << " ce=" << stats.last_ce
           << " lr=" << lr << "\n";
      log->flush();
    }
  }
  net->eval();
  return stats;
}

TeacherStats pretrain_teacher(DenoiserNetwork& net, const std::vector<TokenPair>& train,
                              const NoiseSchedule& sched, const TeacherConfig& cfg,
                              std::ostream* log) {
  if (train.empty()) fail(ErrorKind::kData, "teacher pretraining needs a nonempty dataset");
  const auto L = net->config().seq_len;
  BatchSource source = [&](int64_t batch_size, at::Generator& gen) {
    auto idx = torch::randint(static_cast<int64_t>(train.size()), {batch_size}, gen, torch::kLong);
    std::vector<TokenPair> batch;
    batch.reserve(static_cast<size_t>(batch_size));
    auto acc = idx.accessor<int64_t, 1>();
    for (int64_t i = 0; i < batch_size; ++i) batch.push_back(train[static_cast<size_t>(acc[i])]);
    return TrainingBatch{net->embed(batch), layout_ids(batch, L)};
  };
  auto stats = train_denoiser(net, source, sched, cfg, log);
  check_embedding(net->embedding());
  return stats;
}

double validation_dsm(DenoiserNetwork& net, const std::vector<TokenPair>& pairs,
                      const NoiseSchedule& sched, uint64_t seed, int64_t n_times) {
  require(!pairs.empty(), "validation_dsm needs pairs");
  require(n_times >= 1, "validation_dsm needs at least one time");
  torch::NoGradGuard no_grad;
  net->eval();
  auto clean = net->embed(pairs);
  const auto T = sched.steps();
  double total = 0.0;
  for (int64_t k = 0; k < n_times; ++k) {
    const int t = static_cast<int>((T - 1) * (2 * k + 1) / (2 * n_times));
    auto noise = batch_noise(seed, 0, clean.batch(), static_cast<uint64_t>(k),
                             {clean.values.size(1), clean.values.size(2)})
                     .to(clean.values.options());
    auto noised = clean.with_values(forward_diffuse(clean.values, t, clean.cond_mask, noise, sched));
    auto e_hat = net->denoise(noised, t);
    total += masked_mean_sq(e_hat - clean.values, clean.target_mask()).item<double>();
  }
  return total / static_cast<double>(n_times);
}

SamplerMode parse_sampler_mode(std::string_view name) {
  if (name == "renoise" || name == "ancestral") return SamplerMode::kRenoise;
  if (name == "ddim" || name == "deterministic") return SamplerMode::kDdim;
  fail(ErrorKind::kConfig, "unknown sampler mode '" + std::string(name) + "'");
}

std::string_view to_string(SamplerMode mode) {
  return mode == SamplerMode::kRenoise ? "renoise" : "ddim";
}

std::vector<int> descending_ladder(int from, int to, int count) {
  require(count >= 1, "ladder needs at least one step");
  require(from >= to, "ladder must descend");
  std::vector<int> out(static_cast<size_t>(count));
  if (count == 1) {
    out[0] = from;
    return out;
  }
  for (int k = 0; k < count; ++k) {
    const double frac = static_cast<double>(k) / static_cast<double>(count - 1);
    out[static_cast<size_t>(k)] =
        static_cast<int>(std::llround(from - frac * static_cast<double>(from - to)));
  }
  return out;
}

SampleResult teacher_sample(DenoiserNetwork& net, const std::vector<TokenIds>& sources,
                            int steps, const NoiseSchedule& sched, uint64_t seed,
                            uint64_t first_index, SamplerMode mode,
                            const StepObserver& observer) {
  const int T = sched.steps();
  if (steps < 1 || steps > T) {
    fail(ErrorKind::kInvalidArgument,
         "sampling steps " + std::to_string(steps) + " outside [1, " + std::to_string(T) + "]");
  }
  require(!sources.empty(), "teacher_sample needs at least one source");
  torch::NoGradGuard no_grad;
  net->eval();
  const auto nfe0 = net->nfe();

  auto cond = net->embed_condition(sources);
  const auto B = cond.batch();
  const std::vector<int64_t> shape = {cond.values.size(1), cond.values.size(2)};
  auto opts = cond.values.options();
  auto cmask = cond.cond_mask.unsqueeze(-1);
  auto clamp = [&](const torch::Tensor& v) { return torch::where(cmask, cond.values, v); };

  const auto ladder = descending_ladder(T - 1, 0, steps);
  auto z = batch_noise(seed, first_index, B, 0, shape).to(opts);
  auto x = clamp(z * sched.sigma(ladder.front()));
  torch::Tensor e_hat;
  const auto loop_start = std::chrono::steady_clock::now();
  for (int k = 0; k < steps; ++k) {
    const int t = ladder[static_cast<size_t>(k)];
    auto state = cond.with_values(x);
    if (observer) observer(k, t, state);
    e_hat = clamp(net->denoise(state, t));
    if (k + 1 == steps) break;
    const int t_next = ladder[static_cast<size_t>(k + 1)];
    torch::Tensor eps;
    if (mode == SamplerMode::kRenoise) {
      eps = batch_noise(seed, first_index, B, static_cast<uint64_t>(k + 1), shape).to(opts);
    } else {
      eps = (x - e_hat * sched.alpha(t)) / sched.sigma(t);
    }
    x = clamp(e_hat * sched.alpha(t_next) + eps * sched.sigma(t_next));
  }

  const auto loop_end = std::chrono::steady_clock::now();

  SampleResult res;
  res.loop_seconds = std::chrono::duration<double>(loop_end - loop_start).count();
  res.final_values = e_hat;
  res.full = round_to_tokens(e_hat, net->embedding());
  res.targets.reserve(res.full.size());
  for (size_t i = 0; i < res.full.size(); ++i) {
    res.targets.push_back(extract_target(res.full[i], static_cast<int64_t>(sources[i].size()) + 1));
  }
  res.nfe = net->nfe() - nfe0;
  return res;
}

}  // namespace dlmone
