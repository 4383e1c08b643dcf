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

#include "dlmone/common.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdlib>
#include <cstdio>
#include <iostream>

#include <ATen/CPUGeneratorImpl.h>

#ifndef DLMONE_VERSION
#define DLMONE_VERSION "unknown"
#endif

namespace dlmone {

torch::Device compute_device() {
  const char* env = std::getenv("DLMONE_DEVICE");
  if (env == nullptr || std::string_view(env).empty() ||
      std::string_view(env) == "cpu") {
    return torch::kCPU;
  }
  torch::Device requested(env);
  if (requested.is_cuda() && !torch::cuda::is_available()) {
    std::cerr << "warning: DLMONE_DEVICE=" << env
              << " requested but CUDA is unavailable; using cpu\n";
    return torch::kCPU;
  }
  return requested;
}

at::Generator make_generator(uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

torch::Tensor sample_noise(uint64_t seed, uint64_t index,
                           at::IntArrayRef shape, torch::Dtype dtype) {
  auto gen = make_generator(derive_seed(seed, index));
  return torch::randn(shape, gen, torch::TensorOptions().dtype(dtype));
}

torch::Tensor batch_noise(uint64_t seed, uint64_t first_index, int64_t batch,
                          uint64_t stream, at::IntArrayRef per_sample_shape,
                          torch::Dtype dtype) {
  std::vector<torch::Tensor> parts;
  parts.reserve(static_cast<size_t>(batch));
  for (int64_t i = 0; i < batch; ++i) {
    parts.push_back(sample_noise(derive_seed(seed, first_index + static_cast<uint64_t>(i)),
                                 stream, per_sample_shape, dtype));
  }
  return torch::stack(parts);
}

std::string sha256_hex(std::span<const std::byte> bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len,
                 EVP_sha256(), nullptr) != 1) {
    fail(ErrorKind::kIo, "sha256 digest failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::as_bytes(std::span(text.data(), text.size())));
}

std::string tensor_sha256(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kCPU).contiguous();
  auto* p = static_cast<const std::byte*>(c.data_ptr());
  return sha256_hex(std::span(p, c.nbytes()));
}

std::string_view code_version() { return DLMONE_VERSION; }

}  // namespace dlmone
