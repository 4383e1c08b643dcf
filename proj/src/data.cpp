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

#include "dlmone/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "dlmone/common.hpp"

namespace dlmone {

namespace {

// Portable bounded draw; std::uniform_int_distribution is
// implementation-defined and would make corpora differ across toolchains.
uint64_t draw_below(std::mt19937_64& rng, uint64_t n) {
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

template <typename T>
void portable_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[draw_below(rng, i)]);
  }
}

std::string word_name(int64_t i, int64_t n_words) {
  const int width = static_cast<int>(std::to_string(std::max<int64_t>(n_words - 1, 1)).size());
  std::string digits = std::to_string(i);
  return "w" + std::string(std::max<int>(0, width - static_cast<int>(digits.size())), '0') + digits;
}

}  // namespace

Tokens WhitespaceTokenizer::tokenize(std::string_view text) const {
  Tokens out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string WhitespaceTokenizer::detokenize(const Tokens& tokens) const {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  const std::vector<std::string> specials = {"[PAD]", "[SEP]", "[UNK]"};
  if (tokens.size() < specials.size() ||
      !std::equal(specials.begin(), specials.end(), tokens.begin())) {
    tokens.insert(tokens.begin(), specials.begin(), specials.end());
  }
  tokens_ = std::move(tokens);
  for (size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int64_t>(i)).second) {
      fail(ErrorKind::kData, "duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

int64_t Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int64_t id) const {
  if (id < 0 || id >= size()) {
    fail(ErrorKind::kInvalidArgument,
         "token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<size_t>(id)];
}

TokenIds Vocabulary::encode(const Tokens& tokens) const {
  TokenIds ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocabulary::decode(const TokenIds& ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(token(i));
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kMissingCheckpoint, "cannot read vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return Vocabulary(std::move(tokens));
}

PairCorpus load_pairs(const std::filesystem::path& path, int64_t max_len,
                      Split split, size_t* truncated,
                      const Tokenizer& tokenizer) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kData, "cannot open pair file " + path.string());
  PairCorpus corpus;
  corpus.split = split;
  size_t n_truncated = 0;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorKind::kData, where + ": malformed JSON (" + e.what() + ")");
    }
    for (const char* key : {"src", "trg"}) {
      if (!j.is_object() || !j.contains(key) || !j[key].is_string()) {
        fail(ErrorKind::kData, where + ": missing string field \"" + key + "\"");
      }
    }
    TextPair pair{tokenizer.tokenize(j["src"].get<std::string>()),
                  tokenizer.tokenize(j["trg"].get<std::string>())};
    // The separator takes one slot.
    const auto budget = static_cast<size_t>(std::max<int64_t>(max_len - 1, 0));
    if (pair.src.size() + pair.trg.size() > budget) {
      ++n_truncated;
      const size_t src_keep = std::min(pair.src.size(), budget / 2 + budget % 2);
      const size_t trg_keep = std::min(pair.trg.size(), budget - src_keep);
      pair.trg.resize(trg_keep);
      pair.src.resize(std::min(pair.src.size(), budget - trg_keep));
    }
    corpus.pairs.push_back(std::move(pair));
  }
  if (corpus.pairs.empty()) fail(ErrorKind::kData, "pair file " + path.string() + " is empty");
  if (n_truncated > 0) {
    std::cerr << "warning: truncated " << n_truncated << " oversized pair(s) in "
              << path.string() << "\n";
  }
  if (truncated) *truncated = n_truncated;
  return corpus;
}

void save_pairs(const PairCorpus& corpus, const std::filesystem::path& path,
                const Tokenizer& tokenizer) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write pair file " + path.string());
  for (const auto& p : corpus.pairs) {
    nlohmann::json j = {{"src", tokenizer.detokenize(p.src)},
                        {"trg", tokenizer.detokenize(p.trg)}};
    out << j.dump() << '\n';
  }
}

Vocabulary build_vocab(const PairCorpus& corpus, int64_t max_size) {
  require(max_size >= Vocabulary::kNumSpecials,
          "vocabulary max_size must cover the specials");
  std::map<std::string, int64_t> counts;
  for (const auto& p : corpus.pairs) {
    for (const auto& t : p.src) ++counts[t];
    for (const auto& t : p.trg) ++counts[t];
  }
  std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is already lexicographic; stable sort keeps that for ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = {"[PAD]", "[SEP]", "[UNK]"};
  for (const auto& [tok, _] : ranked) {
    if (static_cast<int64_t>(tokens.size()) >= max_size) break;
    if (tok == "[PAD]" || tok == "[SEP]" || tok == "[UNK]") continue;
    tokens.push_back(tok);
  }
  return Vocabulary(std::move(tokens));
}

std::vector<TokenPair> encode_corpus(const PairCorpus& corpus,
                                     const Vocabulary& vocab) {
  std::vector<TokenPair> out;
  out.reserve(corpus.pairs.size());
  for (const auto& p : corpus.pairs) {
    out.push_back({vocab.encode(p.src), vocab.encode(p.trg)});
  }
  return out;
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "copy") return TaskKind::kCopy;
  if (name == "reversal") return TaskKind::kReversal;
  if (name == "sort") return TaskKind::kSort;
  if (name == "kv-paraphrase") return TaskKind::kKvParaphrase;
  fail(ErrorKind::kInvalidArgument, "unknown task kind '" + std::string(name) + "'");
}

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kCopy: return "copy";
    case TaskKind::kReversal: return "reversal";
    case TaskKind::kSort: return "sort";
    case TaskKind::kKvParaphrase: return "kv-paraphrase";
  }
  return "?";
}

Vocabulary synth_vocab(int64_t vocab_size) {
  require(vocab_size >= 8, "synthetic tasks need vocab_size >= 8");
  const int64_t n_words = vocab_size - Vocabulary::kNumSpecials;
  std::vector<std::string> tokens = {"[PAD]", "[SEP]", "[UNK]"};
  for (int64_t i = 0; i < n_words; ++i) tokens.push_back(word_name(i, n_words));
  return Vocabulary(std::move(tokens));
}

PairCorpus synth_task(TaskKind kind, size_t n, int64_t vocab_size,
                      LengthRange len_range, uint64_t seed,
                      int64_t max_seq_len) {
  require(vocab_size >= 8, "synthetic tasks need vocab_size >= 8");
  if (len_range.min < 1 || len_range.max < len_range.min) {
    fail(ErrorKind::kInvalidArgument, "invalid length range");
  }
  if (2 * len_range.max + 1 > max_seq_len) {
    fail(ErrorKind::kInvalidArgument,
         "length range [" + std::to_string(len_range.min) + ", " +
             std::to_string(len_range.max) + "] does not fit sequence length " +
             std::to_string(max_seq_len));
  }
  const int64_t n_words = vocab_size - Vocabulary::kNumSpecials;
  // Number of distinct sources available; saturates well above any sane n.
  double capacity = 0.0;
  for (int64_t len = len_range.min; len <= len_range.max; ++len) {
    capacity += std::pow(static_cast<double>(n_words), static_cast<double>(len));
  }
  if (static_cast<double>(n) > capacity / 2.0) {
    fail(ErrorKind::kInvalidArgument,
         "cannot draw " + std::to_string(n) + " distinct sources from the length range");
  }

  // Synonym table fixed independently of `seed`.
  std::vector<int64_t> synonym(static_cast<size_t>(n_words));
  for (int64_t i = 0; i < n_words; ++i) synonym[i] = i;
  {
    std::mt19937_64 table_rng(0x5a5a5a5aULL);
    portable_shuffle(synonym, table_rng);
  }

  std::mt19937_64 rng(seed);
  std::unordered_set<std::string> seen;
  PairCorpus corpus;
  corpus.pairs.reserve(n);
  const auto span = static_cast<uint64_t>(len_range.max - len_range.min + 1);
  while (corpus.pairs.size() < n) {
    const auto len = len_range.min + static_cast<int64_t>(draw_below(rng, span));
    std::vector<int64_t> ids(static_cast<size_t>(len));
    for (auto& id : ids) id = static_cast<int64_t>(draw_below(rng, static_cast<uint64_t>(n_words)));
    std::vector<int64_t> out = ids;
    switch (kind) {
      case TaskKind::kCopy: break;
      case TaskKind::kReversal: std::reverse(out.begin(), out.end()); break;
      case TaskKind::kSort: std::sort(out.begin(), out.end()); break;
      case TaskKind::kKvParaphrase:
        for (auto& id : out) id = synonym[static_cast<size_t>(id)];
        break;
    }
    TextPair pair;
    for (auto id : ids) pair.src.push_back(word_name(id, n_words));
    for (auto id : out) pair.trg.push_back(word_name(id, n_words));
    std::string key;
    for (const auto& w : pair.src) key += w + ' ';
    if (!seen.insert(key).second) continue;
    corpus.pairs.push_back(std::move(pair));
  }
  return corpus;
}

CorpusSplits split_corpus(const PairCorpus& corpus, size_t n_valid,
                          size_t n_test, uint64_t seed) {
  require(n_valid + n_test < corpus.pairs.size(),
          "split sizes leave no training pairs");
  std::vector<size_t> order(corpus.pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  portable_shuffle(order, rng);
  CorpusSplits out;
  out.valid.split = Split::kValid;
  out.test.split = Split::kTest;
  out.train.split = Split::kTrain;
  for (size_t i = 0; i < order.size(); ++i) {
    const auto& p = corpus.pairs[order[i]];
    if (i < n_valid) {
      out.valid.pairs.push_back(p);
    } else if (i < n_valid + n_test) {
      out.test.pairs.push_back(p);
    } else {
      out.train.pairs.push_back(p);
    }
  }
  return out;
}

uint64_t pair_hash(const TextPair& pair) {
  // FNV-1a over the token stream with field separators.
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  for (const auto& t : pair.src) mix(t);
  mix("\x01");
  for (const auto& t : pair.trg) mix(t);
  return h;
}

}  // namespace dlmone
