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

#include "dlmone/selftest.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>

#include "dlmone/common.hpp"
#include "dlmone/distill.hpp"
#include "dlmone/metrics.hpp"
#include "dlmone/schedule.hpp"
#include "dlmone/seqmodel.hpp"
#include "dlmone/teacher.hpp"

namespace dlmone {

GaussianOracleResult gaussian_dsm_oracle(const GaussianOracleOptions& opts, std::ostream* log) {
  const auto start = std::chrono::steady_clock::now();
  const auto sched = NoiseSchedule::build();
  ModelConfig mc;
  mc.vocab_size = 8;
  mc.seq_len = opts.seq_len;
  mc.embed_dim = opts.dim;
  mc.hidden = opts.hidden;
  mc.layers = opts.layers;
  mc.heads = opts.heads;
  mc.time_steps = sched.steps();
  auto net = make_network(mc, Role::kTeacher, derive_seed(opts.seed, 1));

  auto world_gen = make_generator(derive_seed(opts.seed, 2));
  GaussianWorld world{torch::randn({opts.dim}, world_gen, torch::kFloat64), opts.scale};
  auto mean32 = world.mean.to(torch::kFloat32);

  auto no_cond = [&](int64_t b) { return torch::zeros({b, opts.seq_len}, torch::kBool); };
  BatchSource source = [&](int64_t b, at::Generator& gen) {
    auto x = mean32 + opts.scale * torch::randn({b, opts.seq_len, opts.dim}, gen);
    return TrainingBatch{EmbeddedSequence{x, no_cond(b), no_cond(b)}, torch::Tensor()};
  };
  TeacherConfig tc;
  tc.steps = opts.train_steps;
  tc.batch_size = opts.batch;
  tc.lr = opts.lr;
  tc.beta1 = 0.9;
  tc.warmup_steps = opts.train_steps / 20;
  tc.final_lr_fraction = 0.05;
  tc.ce_weight = 0.0;
  tc.log_every = std::max<int64_t>(1, opts.train_steps / 10);
  tc.seed = derive_seed(opts.seed, 3);
  train_denoiser(net, source, sched, tc, log);

  GaussianOracleResult res;
  torch::NoGradGuard no_grad;
  auto gen = make_generator(derive_seed(opts.seed, 4));
  const auto n = opts.eval_samples;
  for (int t : opts.times) {
    auto e = world.mean + opts.scale * torch::randn({n, opts.seq_len, opts.dim}, gen, torch::kFloat64);
    auto eps = torch::randn({n, opts.seq_len, opts.dim}, gen, torch::kFloat64);
    auto e_t = e * sched.alpha(t) + eps * sched.sigma(t);
    auto exact = gaussian_posterior_mean(world, e_t, t, sched);
    auto pred = net->denoise(EmbeddedSequence{e_t.to(torch::kFloat32), no_cond(n), no_cond(n)}, t)
                    .to(torch::kFloat64);
    const double err = ((pred - exact).norm() / exact.norm()).item<double>();
    res.errors.emplace_back(t, err);
    if (log) *log << "gaussian oracle t=" << t << " normalized_error=" << err << "\n";
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

double tweedie_consistency_error(int64_t draws, uint64_t seed) {
  const auto sched = NoiseSchedule::build();
  auto gen = make_generator(seed);
  const int64_t d = 16;
  GaussianWorld teacher{torch::randn({d}, gen, torch::kFloat64), 0.7};
  GaussianWorld student{torch::randn({d}, gen, torch::kFloat64), 1.3};
  double worst = 0.0;
  for (int64_t i = 0; i < draws; ++i) {
    const int t = static_cast<int>(torch::randint(sched.steps(), {1}, gen).item<int64_t>());
    auto e_t = torch::randn({d}, gen, torch::kFloat64) * 2.0;
    const double a = sched.alpha(t), s = sched.sigma(t);
    // Score-difference integrand versus its posterior-mean form.
    auto ds = gaussian_score(teacher, e_t, t, sched) - gaussian_score(student, e_t, t, sched);
    auto dm = gaussian_posterior_mean(teacher, e_t, t, sched) -
              gaussian_posterior_mean(student, e_t, t, sched);
    const double lhs = ds.pow(2).sum().item<double>();
    const double rhs = a * a / (s * s * s * s) * dm.pow(2).sum().item<double>();
    const double rel = std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs));
    worst = std::max(worst, rel);
  }
  return worst;
}

FixedPointResult sid_fixed_point(double mu, uint64_t seed) {
  const auto sched = NoiseSchedule::build();
  auto gen = make_generator(seed);
  const int64_t B = 4, L = 6, d = 4;
  GaussianWorld world{torch::randn({d}, gen, torch::kFloat64), 0.8};
  auto cond = torch::zeros({B, L}, torch::kBool);
  cond.index_put_({torch::indexing::Slice(), torch::indexing::Slice(0, 2)}, true);
  auto target = ~cond;
  auto e0 = world.mean + world.scale * torch::randn({B, L, d}, gen, torch::kFloat64);
  auto eps = torch::randn({B, L, d}, gen, torch::kFloat64);

  FixedPointResult res;
  for (int t : {100, 800, 1490, 1900}) {
    auto loss_at = [&](const torch::Tensor& e) {
      auto e_t = forward_diffuse(e, t, cond, eps, sched);
      auto phi = gaussian_posterior_mean(world, e_t, t, sched);
      auto psi = gaussian_posterior_mean(world, e_t, t, sched);
      auto w = sid_weight(WeightMode::kSidAdaptive, phi, e, target, t, sched);
      return sid_loss(phi, psi, e, target, mu, w).item<double>();
    };
    res.max_abs_loss = std::max(res.max_abs_loss, std::abs(loss_at(e0)));
    const double h = 1e-4;
    auto flat = e0.reshape({-1});
    for (int64_t k = 0; k < flat.numel(); ++k) {
      auto plus = flat.clone();
      auto minus = flat.clone();
      plus[k] += h;
      minus[k] -= h;
      const double g = (loss_at(plus.view_as(e0)) - loss_at(minus.view_as(e0))) / (2 * h);
      res.max_abs_grad = std::max(res.max_abs_grad, std::abs(g));
    }
  }
  return res;
}

namespace {

CheckResult check(const std::string& name, bool ok, const std::string& detail) {
  return {name, ok, detail};
}

std::string num(double x) {
  std::ostringstream os;
  os.precision(12);
  os << x;
  return os.str();
}

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace

std::vector<CheckResult> run_selftest(std::ostream* log) {
  std::vector<CheckResult> out;
  auto record = [&](CheckResult r) {
    if (log) *log << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    out.push_back(std::move(r));
  };

  // Loss golden values.
  {
    auto opt = torch::TensorOptions(torch::kFloat64);
    auto zero = torch::zeros({1}, opt);
    const double d = disc_loss(zero, zero).item<double>();
    const double g = gen_adv_loss(zero, false).item<double>();
    record(check("disc_loss at zero logits", close(d, std::log(2.0), 1e-12), num(d)));
    record(check("gen_adv_loss at zero logit", close(g, std::log(2.0), 1e-12), num(g)));
    auto mask = torch::ones({1, 1}, torch::kBool);
    auto s = sid_loss(torch::full({1, 1, 1}, 2.0, opt), torch::full({1, 1, 1}, 1.0, opt),
                      torch::zeros({1, 1, 1}, opt), mask, 0.5, torch::ones({}, opt))
                 .item<double>();
    record(check("sid_loss scalar case", close(s, 1.5, 1e-12), num(s)));
    auto e = torch::zeros({2, 3, 4}, opt);
    auto cond = torch::zeros({2, 3}, torch::kBool);
    cond.index_put_({torch::indexing::Slice(), 0}, true);
    auto e_hat = e + 1.0;
    e_hat.index_put_({torch::indexing::Slice(), 0}, 50.0);
    const double dsm = dsm_loss(e_hat, e, ~cond).item<double>();
    record(check("dsm_loss unit residual", close(dsm, 1.0, 1e-12), num(dsm)));
  }

  // Metric golden values.
  {
    const double b = bleu({0, 1, 2, 3}, {0, 1, 2, 4});
    record(check("bleu smoothed golden", close(b, std::pow(0.1875, 0.25), 1e-12), num(b)));
    const double r = rouge_l({0, 1, 2}, {0, 2});
    const double want = (1 + kRougeBeta * kRougeBeta) * (2.0 / 3.0) /
                        (1.0 + kRougeBeta * kRougeBeta * (2.0 / 3.0));
    record(check("rouge_l golden", close(r, want, 1e-12), num(r)));
    const double d1 = dist1({{0, 1, 2}, {0, 0, 1}});
    record(check("dist1 mean", close(d1, 5.0 / 6.0, 1e-15), num(d1)));
    const double dv = div4({{0, 1, 2, 3, 4}, {0, 1, 2, 3, 4}});
    record(check("div4 duplicate pair", close(dv, 0.5, 1e-15), num(dv)));
  }

  // Conditioning invariant under forward diffusion.
  {
    const auto sched = NoiseSchedule::build();
    auto gen = make_generator(11);
    auto e = torch::randn({3, 8, 4}, gen);
    auto cond = torch::zeros({3, 8}, torch::kBool);
    cond.index_put_({torch::indexing::Slice(), torch::indexing::Slice(0, 3)}, true);
    bool ok = true;
    for (int t = 0; t < sched.steps(); t += 37) {
      auto e_t = forward_diffuse(e, t, cond, torch::randn(e.sizes(), gen), sched);
      ok = ok && torch::equal(e_t.index({cond}), e.index({cond}));
    }
    record(check("forward_diffuse keeps condition span", ok, ok ? "bit-equal" : "mismatch"));
  }

  {
    const double err = tweedie_consistency_error(1000, 5);
    record(check("tweedie consistency", err <= 1e-10, "max relative error " + num(err)));
  }
  for (double mu : {0.5, 1.0, 1.2}) {
    auto fp = sid_fixed_point(mu, 9);
    record(check("sid fixed point mu=" + num(mu),
                 fp.max_abs_loss <= 1e-10 && fp.max_abs_grad <= 1e-6,
                 "loss " + num(fp.max_abs_loss) + ", grad " + num(fp.max_abs_grad)));
  }
  {
    auto res = gaussian_dsm_oracle(GaussianOracleOptions{});
    for (const auto& [t, err] : res.errors) {
      record(check("gaussian oracle t=" + std::to_string(t), err <= 0.05,
                   "normalized error " + num(err)));
    }
  }
  return out;
}

}  // namespace dlmone
