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
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dlmone {

using TokenIds = std::vector<int64_t>;
using Tokens = std::vector<std::string>;

enum class Split { kTrain, kValid, kTest };

struct TextPair {
  Tokens src;
  Tokens trg;
  bool operator==(const TextPair&) const = default;
};

struct PairCorpus {
  std::vector<TextPair> pairs;
  Split split = Split::kTrain;
};

struct TokenPair {
  TokenIds src;
  TokenIds trg;
  bool operator==(const TokenPair&) const = default;
};

/// Splits raw text into tokens. The default is lowercase whitespace
/// splitting; subword tokenizers can be plugged in behind this interface.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual Tokens tokenize(std::string_view text) const = 0;
  virtual std::string detokenize(const Tokens& tokens) const = 0;
};

class WhitespaceTokenizer final : public Tokenizer {
 public:
  Tokens tokenize(std::string_view text) const override;
  std::string detokenize(const Tokens& tokens) const override;
};

/// Token <-> id mapping. [PAD], [SEP] and [UNK] always occupy ids 0..2.
class Vocabulary {
 public:
  static constexpr int64_t kPad = 0;
  static constexpr int64_t kSep = 1;
  static constexpr int64_t kUnk = 2;
  static constexpr int64_t kNumSpecials = 3;

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  int64_t size() const { return static_cast<int64_t>(tokens_.size()); }
  int64_t id(const std::string& token) const;
  const std::string& token(int64_t id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  TokenIds encode(const Tokens& tokens) const;
  Tokens decode(const TokenIds& ids) const;

  static bool is_special(int64_t id) { return id >= 0 && id < kNumSpecials; }

  /// Newline-delimited tokens; id = line number.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int64_t> ids_;
};

/// Loads a JSONL file of {"src": str, "trg": str} objects. Pairs whose
/// concatenation (plus separator) exceeds `max_len` are truncated, target
/// first, and counted in `truncated` when provided.
PairCorpus load_pairs(const std::filesystem::path& path,
                      int64_t max_len = 64, Split split = Split::kTrain,
                      size_t* truncated = nullptr,
                      const Tokenizer& tokenizer = WhitespaceTokenizer());

void save_pairs(const PairCorpus& corpus, const std::filesystem::path& path,
                const Tokenizer& tokenizer = WhitespaceTokenizer());

/// Frequency-ranked vocabulary over src and trg tokens, ties broken
/// lexicographically; `max_size` includes the specials.
Vocabulary build_vocab(const PairCorpus& corpus, int64_t max_size);

std::vector<TokenPair> encode_corpus(const PairCorpus& corpus,
                                     const Vocabulary& vocab);

enum class TaskKind { kCopy, kReversal, kSort, kKvParaphrase };

TaskKind parse_task_kind(std::string_view name);
std::string_view to_string(TaskKind kind);

struct LengthRange {
  int64_t min = 4;
  int64_t max = 10;
};

/// Synthetic seq2seq pairs over words "w00".."wNN" (vocab_size includes the
/// three specials). Sources are distinct; the generator is deterministic in
/// `seed`. kv-paraphrase maps each word through a fixed bijective synonym
/// table that does not depend on `seed`.
PairCorpus synth_task(TaskKind kind, size_t n, int64_t vocab_size,
                      LengthRange len_range, uint64_t seed,
                      int64_t max_seq_len = 64);

/// The vocabulary every synthetic task over `vocab_size` uses.
Vocabulary synth_vocab(int64_t vocab_size);

struct CorpusSplits {
  PairCorpus train;
  PairCorpus valid;
  PairCorpus test;
};

/// Deterministic shuffled split into train / valid / test by counts.
CorpusSplits split_corpus(const PairCorpus& corpus, size_t n_valid,
                          size_t n_test, uint64_t seed);

/// Stable 64-bit hash of a pair, for leakage checks.
uint64_t pair_hash(const TextPair& pair);

}  // namespace dlmone
