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
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include <torch/torch.h>

namespace dlmone {

/// Broad failure categories. The CLI maps each to a distinct exit status.
enum class ErrorKind {
  kInvalidArgument,
  kConfig,
  kData,
  kMissingCheckpoint,
  kDivergence,
  kIo,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::kInvalidArgument, what);
}

/// Compute device from DLMONE_DEVICE ("cpu" by default). Falls back to CPU
/// with a warning when the requested accelerator is unavailable.
torch::Device compute_device();

/// Deterministic CPU generator seeded from `seed`.
at::Generator make_generator(uint64_t seed);

/// SplitMix64 mix of (seed, stream); used to derive per-sample seeds.
uint64_t derive_seed(uint64_t seed, uint64_t stream);

/// Standard normal draw for sample `index` of a run seeded by `seed`. The
/// same (seed, index) always yields the same tensor, independent of batching.
torch::Tensor sample_noise(uint64_t seed, uint64_t index,
                           at::IntArrayRef shape,
                           torch::Dtype dtype = torch::kFloat32);

/// Stacks sample_noise(derive_seed(seed, first_index + i), stream, shape) for
/// i in [0, batch). Each sample's draws depend only on its own index.
torch::Tensor batch_noise(uint64_t seed, uint64_t first_index, int64_t batch,
                          uint64_t stream, at::IntArrayRef per_sample_shape,
                          torch::Dtype dtype = torch::kFloat32);

std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view text);

/// SHA-256 over the raw bytes of a contiguous CPU copy of `t`.
std::string tensor_sha256(const torch::Tensor& t);

/// Version string baked in at configure time.
std::string_view code_version();

}  // namespace dlmone
