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

#include "dlmone/distill.hpp"

#include <cmath>
#include <iostream>
#include <map>
#include <sstream>

#include "dlmone/common.hpp"
#include "dlmone/metrics.hpp"

namespace dlmone {

WeightMode parse_weight_mode(std::string_view name) {
  if (name == "sid-adaptive") return WeightMode::kSidAdaptive;
  if (name == "constant-1") return WeightMode::kConstant;
  if (name == "snr") return WeightMode::kSnr;
  fail(ErrorKind::kConfig, "unknown weight_mode '" + std::string(name) + "'");
}

GammaMode parse_gamma_mode(std::string_view name) {
  if (name == "uniform") return GammaMode::kUniform;
  if (name == "snr") return GammaMode::kSnr;
  fail(ErrorKind::kConfig, "unknown gamma_mode '" + std::string(name) + "'");
}

DiscTimeMode parse_disc_time_mode(std::string_view name) {
  if (name == "shared") return DiscTimeMode::kShared;
  if (name == "independent") return DiscTimeMode::kIndependent;
  fail(ErrorKind::kConfig, "unknown disc_time '" + std::string(name) + "'");
}

std::string_view to_string(WeightMode mode) {
  switch (mode) {
    case WeightMode::kSidAdaptive: return "sid-adaptive";
    case WeightMode::kConstant: return "constant-1";
    case WeightMode::kSnr: return "snr";
  }
  return "?";
}

std::string_view to_string(GammaMode mode) {
  return mode == GammaMode::kUniform ? "uniform" : "snr";
}

std::string_view to_string(DiscTimeMode mode) {
  return mode == DiscTimeMode::kShared ? "shared" : "independent";
}

void DistillConfig::validate(int time_steps) const {
  auto bad = [](const std::string& what) { fail(ErrorKind::kConfig, "distill config: " + what); };
  if (!(0 <= t_min && t_min < t_init && t_init <= t_max && t_max <= time_steps - 1)) {
    bad("need 0 <= t_min < t_init <= t_max <= " + std::to_string(time_steps - 1) +
        ", got t_min=" + std::to_string(t_min) + " t_init=" + std::to_string(t_init) +
        " t_max=" + std::to_string(t_max));
  }
  if (a_sg_dsm < 0 || b_sg_adv < 0 || a_g_sd < 0 || b_g_adv < 0) bad("loss coefficients must be nonnegative");
  if (!(lr_psi > 0) || !(lr_theta > 0)) bad("learning rates must be positive");
  if (budget_steps <= 0) bad("budget_steps must be positive");
  if (val_every <= 0) bad("val_every must be positive");
  if (batch_size <= 0) bad("batch_size must be positive");
  if (stage < 1) bad("stage must be >= 1");
  if (ema_decay < 0 || ema_decay >= 1) bad("ema_decay must lie in [0, 1)");
}

namespace {

torch::Tensor target_weights(const torch::Tensor& values, const torch::Tensor& target_mask) {
  require(target_mask.dim() + 1 == values.dim(), "target mask rank mismatch");
  return target_mask.to(values.scalar_type()).unsqueeze(-1);
}

torch::Tensor target_count(const torch::Tensor& values, const torch::Tensor& target_mask) {
  auto n = target_mask.to(values.scalar_type()).sum() * values.size(-1);
  if (n.item<double>() == 0.0) fail(ErrorKind::kInvalidArgument, "loss has no target positions");
  return n;
}

void check_finite(const torch::Tensor& loss, const std::string& what, int t,
                  std::initializer_list<std::pair<const char*, torch::Tensor>> norms) {
  if (std::isfinite(loss.item<double>())) return;
  std::ostringstream os;
  os << what << " became non-finite at t=" << t;
  for (const auto& [name, x] : norms) {
    if (x.defined()) os << " |" << name << "|=" << x.detach().norm().item<double>();
  }
  fail(ErrorKind::kDivergence, os.str());
}

}  // namespace

torch::Tensor dsm_loss(const torch::Tensor& e_hat, const torch::Tensor& e,
                       const torch::Tensor& target_mask, double gamma) {
  require(e_hat.sizes() == e.sizes(), "dsm_loss shape mismatch");
  auto w = target_weights(e, target_mask);
  return gamma * ((e_hat - e).pow(2) * w).sum() / target_count(e, target_mask);
}

double gamma_weight(GammaMode mode, int t, const NoiseSchedule& sched) {
  if (mode == GammaMode::kUniform) return 1.0;
  const double a = sched.alpha(t), s = sched.sigma(t);
  return a * a / (s * s);
}

torch::Tensor sid_weight(WeightMode mode, const torch::Tensor& e_hat_phi, const torch::Tensor& e,
                         const torch::Tensor& target_mask, int t, const NoiseSchedule& sched) {
  auto opts = e.options().requires_grad(false);
  switch (mode) {
    case WeightMode::kConstant:
      return torch::ones({}, opts);
    case WeightMode::kSnr: {
      const double a = sched.alpha(t), s = sched.sigma(t);
      return torch::full({}, a * a / (s * s * s * s), opts);
    }
    case WeightMode::kSidAdaptive: {
      torch::NoGradGuard no_grad;
      auto w = target_weights(e, target_mask);
      auto mean_abs = ((e_hat_phi - e).abs() * w).sum() / target_count(e, target_mask);
      return 1.0 / mean_abs.clamp_min(1e-5);
    }
  }
  return torch::ones({}, opts);
}

torch::Tensor sid_loss(const torch::Tensor& e_hat_phi, const torch::Tensor& e_hat_psi,
                       const torch::Tensor& e, const torch::Tensor& target_mask, double mu,
                       const torch::Tensor& weight) {
  require(e_hat_phi.sizes() == e.sizes() && e_hat_psi.sizes() == e.sizes(),
          "sid_loss shape mismatch");
  auto w = target_weights(e, target_mask);
  auto gap = e_hat_phi - e_hat_psi;
  auto per_elem = (1.0 - mu) * gap.pow(2) + gap * (e_hat_psi - e);
  return weight * (per_elem * w).sum() / target_count(e, target_mask);
}

torch::Tensor disc_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits) {
  if (real_logits.sizes() != fake_logits.sizes()) {
    fail(ErrorKind::kInvalidArgument, "disc_loss batch size mismatch");
  }
  namespace F = torch::nn::functional;
  auto real = F::binary_cross_entropy_with_logits(real_logits, torch::ones_like(real_logits));
  auto fake = F::binary_cross_entropy_with_logits(fake_logits, torch::zeros_like(fake_logits));
  return 0.5 * (real + fake);
}

torch::Tensor gen_adv_loss(const torch::Tensor& fake_logits, bool training) {
  if (training && !fake_logits.requires_grad()) {
    fail(ErrorKind::kInvalidArgument,
         "gen_adv_loss received logits without a gradient path to the generator");
  }
  return torch::nn::functional::binary_cross_entropy_with_logits(
      fake_logits, torch::ones_like(fake_logits));
}

torch::Tensor dsm_loss(DenoiserNetwork& psi, const EmbeddedSequence& clean,
                       const EmbeddedSequence& noised, int t, GammaMode gamma_mode,
                       const NoiseSchedule& sched) {
  auto e_hat = psi->denoise(noised, t);
  return dsm_loss(e_hat, clean.values, clean.target_mask(), gamma_weight(gamma_mode, t, sched));
}

torch::Tensor sid_loss(DenoiserNetwork& phi, DenoiserNetwork& psi, const EmbeddedSequence& e,
                       const EmbeddedSequence& e_t, int t, double mu, WeightMode weight_mode,
                       const NoiseSchedule& sched) {
  auto e_phi = phi->denoise(e_t, t);
  auto e_psi = psi->denoise(e_t, t);
  auto target = e.target_mask();
  auto w = sid_weight(weight_mode, e_phi, e.values, target, t, sched);
  return sid_loss(e_phi, e_psi, e.values, target, mu, w);
}

torch::Tensor replace_condition(const torch::Tensor& e_gen, const torch::Tensor& e_cond,
                                const torch::Tensor& cond_mask) {
  require(e_gen.sizes() == e_cond.sizes(), "replace_condition shape mismatch");
  if (cond_mask.dim() + 1 != e_gen.dim() ||
      cond_mask.sizes() != e_gen.sizes().slice(0, e_gen.dim() - 1)) {
    fail(ErrorKind::kInvalidArgument, "replace_condition mask shape mismatch");
  }
  return torch::where(cond_mask.to(torch::kBool).unsqueeze(-1), e_cond, e_gen);
}

EmbeddedSequence replace_condition(const EmbeddedSequence& e_gen, const EmbeddedSequence& e_cond) {
  return e_gen.with_values(replace_condition(e_gen.values, e_cond.values, e_cond.cond_mask));
}

EmbeddedSequence generate_one_step(DenoiserNetwork& theta, const std::vector<TokenIds>& sources,
                                   const torch::Tensor& z, int t_init,
                                   const NoiseSchedule& sched) {
  auto cond = theta->embed_condition(sources);
  require(z.sizes() == cond.values.sizes(), "generator noise must be [B, L, d]");
  auto start = replace_condition(z.to(cond.values.options()) * sched.sigma(t_init), cond.values,
                                 cond.cond_mask);
  auto e_hat = theta->denoise(cond.with_values(start), t_init);
  return cond.with_values(replace_condition(e_hat, cond.values, cond.cond_mask));
}

EmbeddedSequence generate_one_step(DenoiserNetwork& theta, const std::vector<TokenIds>& sources,
                                   const torch::Tensor& z, const DistillConfig& cfg,
                                   const NoiseSchedule& sched) {
  if (cfg.t_init < cfg.t_min || cfg.t_init > cfg.t_max) {
    fail(ErrorKind::kInvalidArgument, "t_init " + std::to_string(cfg.t_init) + " outside [t_min, t_max]");
  }
  return generate_one_step(theta, sources, z, cfg.t_init, sched);
}

torch::Tensor guided_teacher_denoise(DenoiserNetwork& phi, const EmbeddedSequence& e_t, int t,
                                     double guidance_scale) {
  auto cond = phi->denoise(e_t, t);
  if (guidance_scale == 0.0) return cond;
  static bool warned = false;
  if (!warned) {
    std::cerr << "warning: guidance_scale != 0 but the teacher was not trained with "
                 "condition dropout; the unconditional branch is extrapolated\n";
    warned = true;
  }
  auto blank = e_t.with_values(
      torch::where(e_t.cond_mask.unsqueeze(-1), torch::zeros_like(e_t.values), e_t.values));
  auto uncond = phi->denoise(blank, t);
  return cond * (1.0 + guidance_scale) - uncond * guidance_scale;
}

std::optional<size_t> best_index(const ValidationHistory& history) {
  if (history.empty()) return std::nullopt;
  size_t best = 0;
  for (size_t i = 1; i < history.size(); ++i) {
    if (history[i].bleu > history[best].bleu) best = i;
  }
  return best;
}

std::string format_losses(int64_t step, const StepLosses& l) {
  std::ostringstream os;
  os.precision(9);
  os << "step=" << step << " t_psi=" << l.t_psi << " dsm=" << l.dsm << " disc=" << l.disc
     << " loss_psi=" << l.psi_total << " t_theta=" << l.t_theta << " sid=" << l.sid
     << " adv=" << l.adv << " loss_theta=" << l.theta_total;
  return os.str();
}

namespace {

std::unique_ptr<torch::optim::AdamW> make_optimizer(std::vector<torch::Tensor> params, double lr,
                                                    const DistillConfig& cfg) {
  return std::make_unique<torch::optim::AdamW>(
      std::move(params), torch::optim::AdamWOptions(lr)
                             .betas({cfg.beta1, cfg.beta2})
                             .weight_decay(cfg.weight_decay));
}

int sample_time(at::Generator& gen, int lo, int hi) {
  return static_cast<int>(torch::randint(lo, hi + 1, {1}, gen, torch::kLong).item<int64_t>());
}

std::vector<TokenIds> sample_conditions(at::Generator& gen, const std::vector<TokenIds>& pool,
                                        int64_t n) {
  auto idx = torch::randint(static_cast<int64_t>(pool.size()), {n}, gen, torch::kLong);
  auto acc = idx.accessor<int64_t, 1>();
  std::vector<TokenIds> out;
  out.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) out.push_back(pool[static_cast<size_t>(acc[i])]);
  return out;
}

torch::Tensor randn_like_gen(const torch::Tensor& like, at::Generator& gen) {
  return torch::randn(like.sizes(), gen).to(like.options().requires_grad(false));
}

void update_ema(DenoiserNetwork& ema, const DenoiserNetwork& theta, double decay) {
  torch::NoGradGuard no_grad;
  auto src = theta->named_parameters(true);
  for (auto& item : ema->named_parameters(true)) {
    if (item.key() == "word_embedding.weight") continue;
    item.value().mul_(decay).add_(src[item.key()], 1.0 - decay);
  }
}

}  // namespace

DistillState init_state(const DenoiserNetwork& phi, const DistillConfig& cfg,
                        const DenoiserNetwork* init_theta) {
  cfg.validate(static_cast<int>(phi->config().time_steps));
  DistillState st;
  st.phi = phi;
  st.phi->eval();
  st.phi->set_requires_grad(false);
  check_embedding(phi->embedding());
  st.embedding_hash = tensor_sha256(phi->embedding());

  if (cfg.stage >= 2) {
    if (init_theta == nullptr || init_theta->is_empty()) {
      fail(ErrorKind::kMissingCheckpoint,
           "stage " + std::to_string(cfg.stage) + " needs a stage-1 student checkpoint");
    }
    st.theta = clone_network(*init_theta, Role::kGenerator, /*with_disc_head=*/false);
    if (tensor_sha256(st.theta->embedding()) != st.embedding_hash) {
      fail(ErrorKind::kData, "student checkpoint embedding differs from the teacher's");
    }
  } else {
    st.theta = clone_network(phi, Role::kGenerator, /*with_disc_head=*/false);
  }
  st.psi = clone_network(phi, Role::kEstimator, /*with_disc_head=*/false);
  st.psi->attach_disc_head(derive_seed(cfg.seed, 0xd15c0000ULL + static_cast<uint64_t>(cfg.stage)));

  for (auto* net : {&st.theta, &st.psi}) {
    (*net)->set_requires_grad(true);
    (*net)->set_embedding_frozen(true);
    (*net)->train();
  }
  st.opt_theta = make_optimizer(st.theta->trainable_parameters(false), cfg.lr_theta, cfg);
  st.opt_psi = make_optimizer(st.psi->trainable_parameters(false), cfg.lr_psi, cfg);
  if (cfg.ema_decay > 0.0) {
    st.ema = clone_network(st.theta, Role::kGenerator, false);
    st.ema->set_requires_grad(false);
    st.ema->eval();
  }
  st.gen = make_generator(derive_seed(cfg.seed, static_cast<uint64_t>(cfg.stage)));
  return st;
}

StepLosses distill_step(DistillState& st, const std::vector<TokenPair>& real_batch,
                        const std::vector<TokenIds>& cond_pool, const DistillConfig& cfg,
                        const NoiseSchedule& sched) {
  if (real_batch.empty()) fail(ErrorKind::kData, "distill_step needs a nonempty real batch");
  require(!cond_pool.empty(), "distill_step needs a nonempty condition pool");
  const auto B = static_cast<int64_t>(real_batch.size());
  StepLosses out;

  // Score-estimator phase: theta only generates, psi learns.
  {
    st.theta->set_requires_grad(false);
    st.psi->set_requires_grad(true);
    st.psi->set_embedding_frozen(true);
    auto c_fake = sample_conditions(st.gen, cond_pool, B);
    const int t = sample_time(st.gen, cfg.t_min, cfg.t_max);
    out.t_psi = t;

    EmbeddedSequence e_fake;
    {
      torch::NoGradGuard no_grad;
      auto cond = st.theta->embed_condition(c_fake);
      auto z = randn_like_gen(cond.values, st.gen);
      e_fake = generate_one_step(st.theta, c_fake, z, cfg, sched);
    }
    auto e_real = st.psi->embed(real_batch);
    auto eps_fake = randn_like_gen(e_fake.values, st.gen);
    auto eps_real = randn_like_gen(e_real.values, st.gen);
    auto fake_t = e_fake.with_values(forward_diffuse(e_fake.values, t, e_fake.cond_mask, eps_fake, sched));
    auto real_t = e_real.with_values(forward_diffuse(e_real.values, t, e_real.cond_mask, eps_real, sched));
    auto tt = torch::full({B}, static_cast<int64_t>(t), torch::TensorOptions(torch::kLong).device(e_fake.values.device()));

    auto [e_hat_psi, fake_logit] = st.psi->denoise_and_discriminate(fake_t, tt);
    torch::Tensor real_logit;
    if (cfg.disc_time == DiscTimeMode::kShared) {
      real_logit = st.psi->discriminate(real_t, tt);
    } else {
      const int td = sample_time(st.gen, cfg.t_min, cfg.t_max);
      auto ttd = torch::full_like(tt, td);
      auto fake_d = e_fake.with_values(forward_diffuse(e_fake.values, td, e_fake.cond_mask,
                                                       randn_like_gen(e_fake.values, st.gen), sched));
      auto real_d = e_real.with_values(forward_diffuse(e_real.values, td, e_real.cond_mask,
                                                       randn_like_gen(e_real.values, st.gen), sched));
      fake_logit = st.psi->discriminate(fake_d, ttd);
      real_logit = st.psi->discriminate(real_d, ttd);
    }
    auto dsm = dsm_loss(e_hat_psi, e_fake.values, e_fake.target_mask(),
                        gamma_weight(cfg.gamma_mode, t, sched));
    auto disc = disc_loss(real_logit, fake_logit);
    auto loss = dsm * cfg.a_sg_dsm + disc * cfg.b_sg_adv;
    check_finite(loss, "score-estimator loss", t,
                 {{"e_fake", e_fake.values}, {"e_hat_psi", e_hat_psi}});
    st.opt_psi->zero_grad();
    loss.backward();
    st.opt_psi->step();
    out.dsm = dsm.item<double>();
    out.disc = disc.item<double>();
    out.psi_total = loss.item<double>();
  }

  // Generator phase: phi and psi frozen, gradients reach theta through e.
  {
    st.psi->set_requires_grad(false);
    st.theta->set_requires_grad(true);
    st.theta->set_embedding_frozen(true);
    auto c_fake = sample_conditions(st.gen, cond_pool, B);
    const int t = sample_time(st.gen, cfg.t_min, cfg.t_max);
    out.t_theta = t;
    torch::Tensor z;
    {
      torch::NoGradGuard no_grad;
      z = randn_like_gen(st.theta->embed_condition(c_fake).values, st.gen);
    }
    auto e_gen = generate_one_step(st.theta, c_fake, z, cfg, sched);
    auto eps = randn_like_gen(e_gen.values, st.gen);
    auto gen_t = e_gen.with_values(forward_diffuse(e_gen.values, t, e_gen.cond_mask, eps, sched));
    auto tt = torch::full({B}, static_cast<int64_t>(t), torch::TensorOptions(torch::kLong).device(e_gen.values.device()));

    auto e_phi = st.phi->denoise(gen_t, tt);
    auto [e_psi, logit] = st.psi->denoise_and_discriminate(gen_t, tt);
    if (cfg.disc_time == DiscTimeMode::kIndependent) {
      const int td = sample_time(st.gen, cfg.t_min, cfg.t_max);
      auto gen_d = e_gen.with_values(forward_diffuse(e_gen.values, td, e_gen.cond_mask,
                                                     randn_like_gen(e_gen.values, st.gen), sched));
      logit = st.psi->discriminate(gen_d, torch::full_like(tt, td));
    }
    auto target = e_gen.target_mask();
    auto w = sid_weight(cfg.weight_mode, e_phi, e_gen.values, target, t, sched);
    auto sid = sid_loss(e_phi, e_psi, e_gen.values, target, cfg.mu, w);
    auto adv = gen_adv_loss(logit, /*training=*/true);
    auto loss = sid * cfg.a_g_sd + adv * cfg.b_g_adv;
    check_finite(loss, "generator loss", t,
                 {{"e_gen", e_gen.values}, {"e_phi", e_phi}, {"e_psi", e_psi}});
    st.opt_theta->zero_grad();
    loss.backward();
    st.opt_theta->step();
    out.sid = sid.item<double>();
    out.adv = adv.item<double>();
    out.theta_total = loss.item<double>();
    st.psi->set_requires_grad(true);
    st.psi->set_embedding_frozen(true);
  }

  if (st.ema) update_ema(st.ema, st.theta, cfg.ema_decay);
  ++st.step;
  return out;
}

double validation_bleu(DenoiserNetwork& theta, const std::vector<TokenPair>& pairs,
                       const DistillConfig& cfg, const NoiseSchedule& sched, double* degenerate) {
  require(!pairs.empty(), "validation needs pairs");
  torch::NoGradGuard no_grad;
  const bool was_training = theta->is_training();
  theta->eval();
  const size_t n = cfg.val_size > 0 ? std::min(pairs.size(), static_cast<size_t>(cfg.val_size))
                                    : pairs.size();
  const size_t chunk = 64;
  std::vector<Sentence> hyps, refs;
  size_t n_degenerate = 0;
  for (size_t start = 0; start < n; start += chunk) {
    const size_t end = std::min(n, start + chunk);
    std::vector<TokenIds> sources;
    for (size_t i = start; i < end; ++i) {
      sources.push_back(pairs[i].src);
      refs.push_back(pairs[i].trg);
    }
    const auto& mc = theta->config();
    auto z = batch_noise(cfg.val_seed, start, static_cast<int64_t>(sources.size()), 0,
                         {mc.seq_len, mc.embed_dim})
                 .to(theta->embedding().options().requires_grad(false));
    auto e = generate_one_step(theta, sources, z, cfg, sched);
    auto full = round_to_tokens(e.values, theta->embedding());
    for (size_t i = 0; i < full.size(); ++i) {
      const auto cond_len = static_cast<int64_t>(sources[i].size()) + 1;
      auto target = extract_target(full[i], cond_len);
      // Degenerate: empty output, or one unigram covering > 90% of tokens.
      bool degen = target.empty();
      if (!degen && target.size() >= 2) {
        std::map<int64_t, size_t> counts;
        size_t top = 0;
        for (auto id : target) top = std::max(top, ++counts[id]);
        degen = static_cast<double>(top) / static_cast<double>(target.size()) > 0.9;
      }
      n_degenerate += degen ? 1 : 0;
      hyps.push_back(std::move(target));
    }
  }
  if (was_training) theta->train();
  if (degenerate) *degenerate = static_cast<double>(n_degenerate) / static_cast<double>(n);
  return mean_sentence_bleu(hyps, refs);
}

StageResult run_stage(const DistillConfig& cfg, const DenoiserNetwork& phi,
                      const DenoiserNetwork* stage1_theta, const std::vector<TokenPair>& train,
                      const std::vector<TokenPair>& valid, const NoiseSchedule& sched,
                      std::ostream* log) {
  if (train.empty()) fail(ErrorKind::kData, "distillation needs a nonempty training split");
  if (valid.empty()) fail(ErrorKind::kData, "distillation needs a nonempty validation split");
  auto st = init_state(phi, cfg, stage1_theta);
  StageResult res;
  res.embedding_hash_before = st.embedding_hash;

  std::vector<TokenIds> cond_pool;
  cond_pool.reserve(train.size());
  for (const auto& p : train) cond_pool.push_back(p.src);

  auto data_gen = make_generator(derive_seed(cfg.seed, 0xda7a0000ULL + static_cast<uint64_t>(cfg.stage)));
  DenoiserNetwork best{nullptr};
  for (int64_t step = 1; step <= cfg.budget_steps; ++step) {
    auto idx = torch::randint(static_cast<int64_t>(train.size()), {cfg.batch_size}, data_gen, torch::kLong);
    auto acc = idx.accessor<int64_t, 1>();
    std::vector<TokenPair> batch;
    batch.reserve(static_cast<size_t>(cfg.batch_size));
    for (int64_t i = 0; i < cfg.batch_size; ++i) batch.push_back(train[static_cast<size_t>(acc[i])]);

    auto losses = distill_step(st, batch, cond_pool, cfg, sched);
    if (log) *log << format_losses(st.step, losses) << "\n";

    if (st.step % cfg.val_every == 0) {
      auto& eval_net = st.ema ? st.ema : st.theta;
      double degenerate = 0.0;
      const double b = validation_bleu(eval_net, valid, cfg, sched, &degenerate);
      st.history.push_back({st.step, b});
      if (log) *log << "step=" << st.step << " val_bleu=" << b << " degenerate=" << degenerate << "\n";
      if (degenerate > 0.0) {
        std::cerr << "warning: step " << st.step << ": " << degenerate * 100.0
                  << "% of validation generations are degenerate (all [PAD] or repetitive)\n";
      }
      if (best_index(st.history) == st.history.size() - 1) {
        best = clone_network(eval_net, Role::kGenerator, false);
        res.best_step = st.step;
      }
    }
  }
  res.history = st.history;
  res.steps_run = st.step;
  if (best.is_empty()) {
    best = clone_network(st.ema ? st.ema : st.theta, Role::kGenerator, false);
    res.best_step = st.step;
  }
  best->eval();
  best->set_requires_grad(false);
  res.theta = best;
  res.embedding_hash_after = tensor_sha256(res.theta->embedding());
  if (res.embedding_hash_after != res.embedding_hash_before ||
      tensor_sha256(st.phi->embedding()) != res.embedding_hash_before) {
    fail(ErrorKind::kDivergence, "embedding matrix changed during distillation");
  }
  return res;
}

}  // namespace dlmone
