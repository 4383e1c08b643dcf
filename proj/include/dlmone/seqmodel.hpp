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

#include <atomic>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "dlmone/data.hpp"

namespace dlmone {

struct ModelConfig {
  int64_t vocab_size = 64;
  int64_t seq_len = 64;    // L: condition + [SEP] + target, padded
  int64_t embed_dim = 128; // d
  int64_t hidden = 128;
  int64_t layers = 4;
  int64_t heads = 4;
  int64_t ffn_mult = 4;
  int64_t time_steps = 2000;  // T, bounds the accepted time index

  bool operator==(const ModelConfig&) const = default;
};

enum class Role { kTeacher, kGenerator, kEstimator };

std::string_view to_string(Role role);
Role parse_role(std::string_view name);

/// A batch of length-L, dimension-d embeddings.
///
/// cond_mask marks the condition span (source tokens and [SEP]). pad_mask
/// marks positions that are not part of the sequence at all: they are masked
/// as attention keys, ignored by pooling, and excluded from every loss. In
/// the standard layout the trailing [PAD] tokens of the target span are
/// target content (the model learns to emit them), so pad_mask is all false.
struct EmbeddedSequence {
  torch::Tensor values;     // [B, L, d]
  torch::Tensor cond_mask;  // [B, L] bool
  torch::Tensor pad_mask;   // [B, L] bool

  int64_t batch() const { return values.size(0); }
  torch::Tensor target_mask() const { return ~cond_mask & ~pad_mask; }
  EmbeddedSequence with_values(torch::Tensor v) const {
    return {std::move(v), cond_mask, pad_mask};
  }
};

/// src + [SEP] + trg, right-padded with [PAD] to seq_len.
TokenIds layout_tokens(const TokenIds& src, const TokenIds& trg, int64_t seq_len);

/// Target tokens of a laid-out sequence with specials removed.
TokenIds extract_target(const TokenIds& full, int64_t cond_len);

class DenoiserNetworkImpl : public torch::nn::Module {
 public:
  DenoiserNetworkImpl(ModelConfig cfg, Role role, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  Role role() const { return role_; }
  void set_role(Role role) { role_ = role; }

  /// Frozen-or-trained token embedding table E, [V, d].
  torch::Tensor embedding() const { return word_embedding_->weight; }

  /// Looks up (src, trg) pairs in E. An empty trg yields a target span of
  /// [PAD] tokens; use `embed_condition` when the target is unknown.
  EmbeddedSequence embed(const std::vector<TokenPair>& pairs) const;
  EmbeddedSequence embed(const TokenPair& pair) const { return embed(std::vector{pair}); }

  /// Condition-only embedding: target positions are zero.
  EmbeddedSequence embed_condition(const std::vector<TokenIds>& sources) const;

  /// Final hidden states [B, L, H] for noisy input at per-sample times t.
  torch::Tensor trunk(const EmbeddedSequence& e_t, const torch::Tensor& t);

  /// Posterior-mean prediction e_hat with the same shape as e_t.values.
  torch::Tensor denoise(const EmbeddedSequence& e_t, const torch::Tensor& t);
  torch::Tensor denoise(const EmbeddedSequence& e_t, int t);

  /// One logit per sequence from mean-pooled hidden states over non-pad
  /// positions. Requires a discriminator head.
  torch::Tensor discriminate(const EmbeddedSequence& e_t, const torch::Tensor& t);
  torch::Tensor discriminate(const EmbeddedSequence& e_t, int t);

  /// Denoiser output and discriminator logit from one trunk pass (one NFE).
  std::pair<torch::Tensor, torch::Tensor> denoise_and_discriminate(const EmbeddedSequence& e_t,
                                                                   const torch::Tensor& t);

  /// Tied lm-head logits e_hat E^T, [B, L, V].
  torch::Tensor logits(const torch::Tensor& e_hat) const;

  bool has_disc_head() const { return !disc_head_.is_empty(); }
  /// Registers (or re-initializes) the discriminator head.
  void attach_disc_head(uint64_t seed);
  torch::nn::Linear& disc_head() { return disc_head_; }

  /// Everything except E and the discriminator head.
  std::vector<torch::Tensor> trunk_parameters() const;

  /// Parameters an optimizer should update: the trunk, the discriminator
  /// head when present, and E only when `include_embedding`.
  std::vector<torch::Tensor> trainable_parameters(bool include_embedding) const;

  void set_embedding_frozen(bool frozen);
  void set_requires_grad(bool value);

  /// Re-initializes all parameters from `seed` (E ~ N(0, 1), linear weights
  /// N(0, 0.02^2), zero biases, unit layer norms).
  void reset_parameters(uint64_t seed);

  /// Number of denoise() forward passes since the last reset.
  int64_t nfe() const { return nfe_.load(); }
  void reset_nfe() { nfe_.store(0); }

 private:
  struct Block {
    torch::nn::LayerNorm ln1{nullptr};
    torch::nn::Linear qkv{nullptr};
    torch::nn::Linear proj{nullptr};
    torch::nn::LayerNorm ln2{nullptr};
    torch::nn::Linear ff1{nullptr};
    torch::nn::Linear ff2{nullptr};
  };

  void require_disc_head() const;
  torch::Tensor pool_logit(const torch::Tensor& h, const EmbeddedSequence& e_t);
  torch::Tensor time_features(const torch::Tensor& t);
  torch::Tensor attention(Block& b, const torch::Tensor& x,
                          const torch::Tensor& pad_mask);
  void check_input(const EmbeddedSequence& e_t, const torch::Tensor& t) const;

  ModelConfig cfg_;
  Role role_;
  torch::nn::Embedding word_embedding_{nullptr};
  torch::nn::Linear input_proj_{nullptr};
  torch::Tensor position_;
  torch::nn::Linear time_fc1_{nullptr};
  torch::nn::Linear time_fc2_{nullptr};
  std::vector<Block> blocks_;
  torch::nn::LayerNorm final_norm_{nullptr};
  torch::nn::Linear output_proj_{nullptr};
  torch::nn::Linear disc_head_{nullptr};
  std::atomic<int64_t> nfe_{0};
};

TORCH_MODULE(DenoiserNetwork);

DenoiserNetwork make_network(const ModelConfig& cfg, Role role, uint64_t seed);

/// A new network with parameters bit-copied from `src` (including the
/// discriminator head when present and `with_disc_head`).
DenoiserNetwork clone_network(const DenoiserNetwork& src, Role role,
                              bool with_disc_head = true);

/// Copies every shared parameter of `src` into `dst` bit-exactly; the
/// discriminator head is copied only when `with_disc_head` and both have one.
void copy_parameters(const DenoiserNetwork& src, DenoiserNetwork& dst,
                     bool with_disc_head);

/// max |a - b| over trunk parameters (E and discriminator head excluded).
double max_trunk_difference(const DenoiserNetwork& a, const DenoiserNetwork& b);

/// Nearest row of E under squared distance per position; ties go to the
/// smaller id. Throws on non-finite input.
std::vector<TokenIds> round_to_tokens(const torch::Tensor& values,
                                      const torch::Tensor& embedding);

/// Minimum distance between distinct rows of E.
double min_pairwise_distance(const torch::Tensor& embedding);

/// Throws unless E is finite and free of duplicate rows.
void check_embedding(const torch::Tensor& embedding);

}  // namespace dlmone
