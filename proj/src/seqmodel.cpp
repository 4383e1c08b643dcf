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

#include "dlmone/seqmodel.hpp"

#include <cmath>
#include <limits>

#include "dlmone/common.hpp"

namespace dlmone {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kTeacher: return "teacher";
    case Role::kGenerator: return "generator";
    case Role::kEstimator: return "estimator";
  }
  return "?";
}

Role parse_role(std::string_view name) {
  if (name == "teacher") return Role::kTeacher;
  if (name == "generator") return Role::kGenerator;
  if (name == "estimator") return Role::kEstimator;
  fail(ErrorKind::kConfig, "unknown network role '" + std::string(name) + "'");
}

TokenIds layout_tokens(const TokenIds& src, const TokenIds& trg, int64_t seq_len) {
  const auto used = static_cast<int64_t>(src.size() + 1 + trg.size());
  if (used > seq_len) {
    fail(ErrorKind::kInvalidArgument,
         "sequence of " + std::to_string(used) + " tokens exceeds L=" +
             std::to_string(seq_len));
  }
  TokenIds ids;
  ids.reserve(static_cast<size_t>(seq_len));
  ids.insert(ids.end(), src.begin(), src.end());
  ids.push_back(Vocabulary::kSep);
  ids.insert(ids.end(), trg.begin(), trg.end());
  ids.resize(static_cast<size_t>(seq_len), Vocabulary::kPad);
  return ids;
}

TokenIds extract_target(const TokenIds& full, int64_t cond_len) {
  TokenIds out;
  for (size_t i = static_cast<size_t>(cond_len); i < full.size(); ++i) {
    if (!Vocabulary::is_special(full[i])) out.push_back(full[i]);
  }
  return out;
}

DenoiserNetworkImpl::DenoiserNetworkImpl(ModelConfig cfg, Role role, uint64_t seed)
    : cfg_(cfg), role_(role) {
  require(cfg_.vocab_size > Vocabulary::kNumSpecials, "vocab_size too small");
  require(cfg_.seq_len >= 2, "seq_len must be >= 2");
  require(cfg_.hidden % cfg_.heads == 0, "hidden must be divisible by heads");
  require(cfg_.hidden % 2 == 0, "hidden must be even");
  require(cfg_.layers >= 1 && cfg_.embed_dim >= 1, "invalid model shape");

  const auto H = cfg_.hidden;
  word_embedding_ = register_module(
      "word_embedding", torch::nn::Embedding(cfg_.vocab_size, cfg_.embed_dim));
  input_proj_ = register_module("input_proj", torch::nn::Linear(cfg_.embed_dim, H));
  position_ = register_parameter("position", torch::zeros({cfg_.seq_len, H}));
  time_fc1_ = register_module("time_fc1", torch::nn::Linear(H, H));
  time_fc2_ = register_module("time_fc2", torch::nn::Linear(H, H));
  for (int64_t i = 0; i < cfg_.layers; ++i) {
    const auto p = "block" + std::to_string(i) + "_";
    Block b;
    b.ln1 = register_module(p + "ln1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({H})));
    b.qkv = register_module(p + "qkv", torch::nn::Linear(H, 3 * H));
    b.proj = register_module(p + "proj", torch::nn::Linear(H, H));
    b.ln2 = register_module(p + "ln2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({H})));
    b.ff1 = register_module(p + "ff1", torch::nn::Linear(H, cfg_.ffn_mult * H));
    b.ff2 = register_module(p + "ff2", torch::nn::Linear(cfg_.ffn_mult * H, H));
    blocks_.push_back(b);
  }
  final_norm_ = register_module("final_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({H})));
  output_proj_ = register_module("output_proj", torch::nn::Linear(H, cfg_.embed_dim));
  reset_parameters(seed);
  if (role_ == Role::kEstimator) attach_disc_head(derive_seed(seed, 0xd15c));
}

void DenoiserNetworkImpl::reset_parameters(uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto gen = make_generator(seed);
  for (auto& item : named_parameters(/*recurse=*/true)) {
    const auto& name = item.key();
    auto& p = item.value();
    const auto shape = p.sizes();
    if (name == "word_embedding.weight") {
      p.copy_(torch::randn(shape, gen));
    } else if (name == "position") {
      p.copy_(torch::randn(shape, gen) * 0.02);
    } else if (name.find("ln") != std::string::npos || name.find("norm") != std::string::npos) {
      p.fill_(name.ends_with("weight") ? 1.0 : 0.0);
    } else if (name.ends_with("bias")) {
      p.zero_();
    } else {
      p.copy_(torch::randn(shape, gen) * 0.02);
    }
  }
}

void DenoiserNetworkImpl::attach_disc_head(uint64_t seed) {
  torch::NoGradGuard no_grad;
  if (disc_head_.is_empty()) {
    disc_head_ = register_module("disc_head", torch::nn::Linear(cfg_.hidden, 1));
  }
  auto gen = make_generator(seed);
  disc_head_->weight.copy_(torch::randn(disc_head_->weight.sizes(), gen) * 0.02);
  disc_head_->bias.zero_();
}

EmbeddedSequence DenoiserNetworkImpl::embed(const std::vector<TokenPair>& pairs) const {
  require(!pairs.empty(), "embed needs at least one pair");
  const auto B = static_cast<int64_t>(pairs.size());
  const auto L = cfg_.seq_len;
  std::vector<int64_t> ids;
  ids.reserve(static_cast<size_t>(B * L));
  auto cond = torch::zeros({B, L}, torch::kBool);
  auto cond_a = cond.accessor<bool, 2>();
  for (int64_t b = 0; b < B; ++b) {
    const auto& p = pairs[static_cast<size_t>(b)];
    for (auto id : p.src) {
      if (id < 0 || id >= cfg_.vocab_size) {
        fail(ErrorKind::kInvalidArgument, "token id " + std::to_string(id) + " out of vocabulary");
      }
    }
    for (auto id : p.trg) {
      if (id < 0 || id >= cfg_.vocab_size) {
        fail(ErrorKind::kInvalidArgument, "token id " + std::to_string(id) + " out of vocabulary");
      }
    }
    auto seq = layout_tokens(p.src, p.trg, L);
    ids.insert(ids.end(), seq.begin(), seq.end());
    for (size_t i = 0; i <= p.src.size(); ++i) cond_a[b][static_cast<int64_t>(i)] = true;
  }
  auto dev = word_embedding_->weight.device();
  auto idx = torch::tensor(ids, torch::kLong).view({B, L}).to(dev);
  auto values = torch::embedding(word_embedding_->weight, idx);
  return {values, cond.to(dev), torch::zeros({B, L}, torch::TensorOptions(torch::kBool).device(dev))};
}

EmbeddedSequence DenoiserNetworkImpl::embed_condition(const std::vector<TokenIds>& sources) const {
  std::vector<TokenPair> pairs;
  pairs.reserve(sources.size());
  for (const auto& s : sources) pairs.push_back({s, {}});
  auto e = embed(pairs);
  e.values = torch::where(e.cond_mask.unsqueeze(-1), e.values, torch::zeros_like(e.values));
  return e;
}

torch::Tensor DenoiserNetworkImpl::time_features(const torch::Tensor& t) {
  const auto half = cfg_.hidden / 2;
  auto opts = torch::TensorOptions().dtype(position_.scalar_type()).device(position_.device());
  auto freqs = torch::exp(torch::arange(half, opts) * (-std::log(10000.0) / static_cast<double>(half)));
  auto args = t.to(opts).unsqueeze(1) * freqs.unsqueeze(0);
  auto emb = torch::cat({torch::cos(args), torch::sin(args)}, 1);
  return time_fc2_(torch::silu(time_fc1_(emb)));
}

torch::Tensor DenoiserNetworkImpl::attention(Block& b, const torch::Tensor& x,
                                             const torch::Tensor& pad_mask) {
  const auto B = x.size(0);
  const auto L = x.size(1);
  const auto H = cfg_.hidden;
  const auto nh = cfg_.heads;
  const auto hd = H / nh;
  auto qkv = b.qkv->forward(x).view({B, L, 3, nh, hd}).permute({2, 0, 3, 1, 4});
  auto q = qkv[0], k = qkv[1], v = qkv[2];  // [B, nh, L, hd]
  auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(hd));
  scores = scores.masked_fill(pad_mask.view({B, 1, 1, L}),
                              -std::numeric_limits<double>::infinity());
  auto attn = torch::softmax(scores, -1);
  auto out = torch::matmul(attn, v).transpose(1, 2).reshape({B, L, H});
  return b.proj->forward(out);
}

void DenoiserNetworkImpl::check_input(const EmbeddedSequence& e_t, const torch::Tensor& t) const {
  const auto& v = e_t.values;
  if (v.dim() != 3 || v.size(1) != cfg_.seq_len || v.size(2) != cfg_.embed_dim) {
    fail(ErrorKind::kInvalidArgument, "denoiser input must be [B, " +
                                          std::to_string(cfg_.seq_len) + ", " +
                                          std::to_string(cfg_.embed_dim) + "]");
  }
  require(t.dim() == 1 && t.size(0) == v.size(0), "time tensor must be [B]");
  require(e_t.cond_mask.sizes() == v.sizes().slice(0, 2) &&
              e_t.pad_mask.sizes() == v.sizes().slice(0, 2),
          "mask shape does not match embedding shape");
  const auto lo = t.min().item<int64_t>();
  const auto hi = t.max().item<int64_t>();
  if (lo < 0 || hi >= cfg_.time_steps) {
    fail(ErrorKind::kInvalidArgument, "time index outside [0, " +
                                          std::to_string(cfg_.time_steps - 1) + "]");
  }
}

torch::Tensor DenoiserNetworkImpl::trunk(const EmbeddedSequence& e_t, const torch::Tensor& t) {
  check_input(e_t, t);
  auto x = input_proj_(e_t.values) + position_.unsqueeze(0) +
           time_features(t).unsqueeze(1);
  for (auto& b : blocks_) {
    x = x + attention(b, b.ln1(x), e_t.pad_mask);
    x = x + b.ff2(torch::gelu(b.ff1(b.ln2(x))));
  }
  return final_norm_(x);
}

torch::Tensor DenoiserNetworkImpl::denoise(const EmbeddedSequence& e_t, const torch::Tensor& t) {
  ++nfe_;
  return output_proj_(trunk(e_t, t));
}

torch::Tensor DenoiserNetworkImpl::denoise(const EmbeddedSequence& e_t, int t) {
  auto tt = torch::full({e_t.values.size(0)}, static_cast<int64_t>(t),
                        torch::TensorOptions(torch::kLong).device(e_t.values.device()));
  return denoise(e_t, tt);
}

void DenoiserNetworkImpl::require_disc_head() const {
  if (!has_disc_head()) {
    fail(ErrorKind::kInvalidArgument,
         "discriminate called on a " + std::string(to_string(role_)) +
             " network without a discriminator head");
  }
}

torch::Tensor DenoiserNetworkImpl::pool_logit(const torch::Tensor& h, const EmbeddedSequence& e_t) {
  auto keep = (~e_t.pad_mask).to(h.scalar_type()).unsqueeze(-1);
  auto pooled = (h * keep).sum(1) / keep.sum(1).clamp_min(1.0);
  return disc_head_(pooled).squeeze(-1);
}

torch::Tensor DenoiserNetworkImpl::discriminate(const EmbeddedSequence& e_t, const torch::Tensor& t) {
  require_disc_head();
  return pool_logit(trunk(e_t, t), e_t);
}

std::pair<torch::Tensor, torch::Tensor> DenoiserNetworkImpl::denoise_and_discriminate(
    const EmbeddedSequence& e_t, const torch::Tensor& t) {
  require_disc_head();
  ++nfe_;
  auto h = trunk(e_t, t);
  return {output_proj_(h), pool_logit(h, e_t)};
}

torch::Tensor DenoiserNetworkImpl::discriminate(const EmbeddedSequence& e_t, int t) {
  auto tt = torch::full({e_t.values.size(0)}, static_cast<int64_t>(t),
                        torch::TensorOptions(torch::kLong).device(e_t.values.device()));
  return discriminate(e_t, tt);
}

torch::Tensor DenoiserNetworkImpl::logits(const torch::Tensor& e_hat) const {
  return torch::matmul(e_hat, word_embedding_->weight.t());
}

std::vector<torch::Tensor> DenoiserNetworkImpl::trunk_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& item : named_parameters(true)) {
    if (item.key() == "word_embedding.weight" || item.key().starts_with("disc_head")) continue;
    out.push_back(item.value());
  }
  return out;
}

std::vector<torch::Tensor> DenoiserNetworkImpl::trainable_parameters(bool include_embedding) const {
  std::vector<torch::Tensor> out;
  for (const auto& item : named_parameters(true)) {
    if (item.key() == "word_embedding.weight" && !include_embedding) continue;
    out.push_back(item.value());
  }
  return out;
}

void DenoiserNetworkImpl::set_embedding_frozen(bool frozen) {
  word_embedding_->weight.set_requires_grad(!frozen);
}

void DenoiserNetworkImpl::set_requires_grad(bool value) {
  for (auto& p : parameters(true)) p.set_requires_grad(value);
}

DenoiserNetwork make_network(const ModelConfig& cfg, Role role, uint64_t seed) {
  DenoiserNetwork net(cfg, role, seed);
  net->to(compute_device());
  return net;
}

void copy_parameters(const DenoiserNetwork& src, DenoiserNetwork& dst, bool with_disc_head) {
  require(src->config() == dst->config(), "cannot copy parameters across model shapes");
  torch::NoGradGuard no_grad;
  auto src_params = src->named_parameters(true);
  for (auto& item : dst->named_parameters(true)) {
    if (item.key().starts_with("disc_head") && !with_disc_head) continue;
    const auto* from = src_params.find(item.key());
    if (from == nullptr) continue;
    item.value().copy_(*from);
  }
}

DenoiserNetwork clone_network(const DenoiserNetwork& src, Role role, bool with_disc_head) {
  DenoiserNetwork dst(src->config(), role, 0);
  dst->to(src->embedding().device());
  if (with_disc_head && src->has_disc_head() && !dst->has_disc_head()) {
    dst->attach_disc_head(0);
  }
  copy_parameters(src, dst, with_disc_head);
  return dst;
}

double max_trunk_difference(const DenoiserNetwork& a, const DenoiserNetwork& b) {
  auto pa = a->trunk_parameters();
  auto pb = b->trunk_parameters();
  require(pa.size() == pb.size(), "networks have different parameter sets");
  double m = 0.0;
  for (size_t i = 0; i < pa.size(); ++i) {
    m = std::max(m, (pa[i] - pb[i]).abs().max().item<double>());
  }
  return m;
}

std::vector<TokenIds> round_to_tokens(const torch::Tensor& values,
                                      const torch::Tensor& embedding) {
  torch::NoGradGuard no_grad;
  auto v = values.dim() == 2 ? values.unsqueeze(0) : values;
  require(v.dim() == 3 && v.size(2) == embedding.size(1),
          "rounding needs [B, L, d] embeddings matching E");
  if (!torch::isfinite(v).all().item<bool>()) {
    fail(ErrorKind::kInvalidArgument, "cannot round non-finite embeddings");
  }
  auto E = embedding.detach().to(v.device(), v.scalar_type());
  std::vector<TokenIds> out;
  out.reserve(static_cast<size_t>(v.size(0)));
  for (int64_t b = 0; b < v.size(0); ++b) {
    // Direct squared differences: [L, V]. argmin returns the first minimum,
    // which is the smaller token id.
    auto d = (v[b].unsqueeze(1) - E.unsqueeze(0)).pow(2).sum(-1);
    auto idx = d.argmin(1).to(torch::kCPU);
    out.emplace_back(idx.data_ptr<int64_t>(), idx.data_ptr<int64_t>() + idx.numel());
  }
  return out;
}

double min_pairwise_distance(const torch::Tensor& embedding) {
  torch::NoGradGuard no_grad;
  auto E = embedding.detach().to(torch::kCPU, torch::kFloat64);
  auto d = torch::cdist(E, E);
  d.fill_diagonal_(std::numeric_limits<double>::infinity());
  return d.min().item<double>();
}

void check_embedding(const torch::Tensor& embedding) {
  if (!torch::isfinite(embedding).all().item<bool>()) {
    fail(ErrorKind::kData, "embedding matrix has non-finite entries");
  }
  if (!(min_pairwise_distance(embedding) > 0.0)) {
    fail(ErrorKind::kData, "embedding matrix has collapsed (duplicate) rows");
  }
}

}  // namespace dlmone
