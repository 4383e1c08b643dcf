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


#include "testing.hpp"

#include <filesystem>
#include <fstream>
#include <unordered_set>

#include "dlmone/common.hpp"
#include "dlmone/data.hpp"

namespace dlmone {

std::ostream& operator<<(std::ostream& os, const TextPair& p) {
  os << "{";
  for (const auto& w : p.src) os << w << " ";
  os << "=>";
  for (const auto& w : p.trg) os << " " << w;
  return os << "}";
}

}  // namespace dlmone

using namespace dlmone;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "dlmone_test_data";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("load_pairs parses, lowercases and names bad lines") {
  auto p = scratch("ok.jsonl");
  write_file(p, "{\"src\": \"A b\", \"trg\": \"b a\"}\n\n{\"src\": \"c\", \"trg\": \"d e\"}\n");
  auto c = load_pairs(p);
  REQUIRE(c.pairs.size() == 2);
  CHECK((c.pairs[0] == TextPair{{"a", "b"}, {"b", "a"}}));

  auto bad = scratch("bad.jsonl");
  write_file(bad, "{\"src\": \"a\", \"trg\": \"b\"}\n{\"src\": \"a\"}\n");
  try {
    load_pairs(bad);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kData);
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  auto empty = scratch("empty.jsonl");
  write_file(empty, "");
  CHECK_THROWS_AS(load_pairs(empty), Error);
  CHECK_THROWS_AS(load_pairs(scratch("missing.jsonl")), Error);
}

TEST_CASE("oversized pairs are truncated and counted") {
  auto p = scratch("long.jsonl");
  write_file(p, "{\"src\": \"a b c d e f\", \"trg\": \"g h i j k l\"}\n{\"src\": \"a\", \"trg\": \"b\"}\n");
  size_t truncated = 0;
  auto c = load_pairs(p, 8, Split::kTrain, &truncated);
  CHECK(truncated == 1);
  CHECK(c.pairs[0].src.size() + c.pairs[0].trg.size() + 1 <= 8);
}

TEST_CASE("save then load is the identity") {
  auto c = synth_task(TaskKind::kReversal, 50, 32, {2, 6}, 4);
  auto p = scratch("round.jsonl");
  save_pairs(c, p);
  CHECK(load_pairs(p).pairs == c.pairs);
}

TEST_CASE("vocabulary specials, ranking and files") {
  PairCorpus c;
  c.pairs = {{{"b", "a"}, {"a"}}, {{"c"}, {"a", "b"}}};
  auto v = build_vocab(c, 100);
  CHECK(v.token(0) == "[PAD]");
  CHECK(v.token(1) == "[SEP]");
  CHECK(v.token(2) == "[UNK]");
  CHECK(v.token(3) == "a");
  CHECK(v.token(4) == "b");
  CHECK(v.id("zzz") == Vocabulary::kUnk);
  CHECK(build_vocab(c, 100) == v);
  CHECK(build_vocab(c, 4).size() == 4);

  auto p = scratch("vocab.txt");
  v.save(p);
  CHECK(Vocabulary::load(p) == v);
  CHECK((v.decode(v.encode({"a", "c"})) == Tokens{"a", "c"}));
}

TEST_CASE("synthetic tasks") {
  auto rev = synth_task(TaskKind::kReversal, 20, 16, {3, 5}, 1);
  for (const auto& p : rev.pairs) {
    Tokens r(p.src.rbegin(), p.src.rend());
    CHECK(p.trg == r);
  }
  CHECK(synth_task(TaskKind::kReversal, 20, 16, {3, 5}, 1).pairs == rev.pairs);
  CHECK(synth_task(TaskKind::kReversal, 20, 16, {3, 5}, 2).pairs != rev.pairs);

  auto srt = synth_task(TaskKind::kSort, 10, 16, {3, 5}, 1);
  for (const auto& p : srt.pairs) CHECK(std::is_sorted(p.trg.begin(), p.trg.end()));

  // The synonym table is a bijection shared across seeds.
  auto kv1 = synth_task(TaskKind::kKvParaphrase, 200, 16, {3, 5}, 1);
  auto kv2 = synth_task(TaskKind::kKvParaphrase, 200, 16, {3, 5}, 9);
  std::map<std::string, std::string> table;
  for (const auto* c : {&kv1, &kv2}) {
    for (const auto& p : c->pairs) {
      for (size_t i = 0; i < p.src.size(); ++i) {
        auto [it, fresh] = table.emplace(p.src[i], p.trg[i]);
        CHECK(it->second == p.trg[i]);
      }
    }
  }
  std::set<std::string> images;
  for (const auto& [k, v] : table) images.insert(v);
  CHECK(images.size() == table.size());

  CHECK_THROWS_AS(synth_task(TaskKind::kCopy, 10, 4, {1, 2}, 0), Error);
  CHECK_THROWS_AS(synth_task(TaskKind::kCopy, 10, 16, {20, 40}, 0, 64), Error);
  CHECK_THROWS_AS(synth_task(TaskKind::kCopy, 1000, 8, {1, 1}, 0), Error);
  CHECK_THROWS_AS(parse_task_kind("shuffle"), Error);
}

TEST_CASE("splits are disjoint") {
  auto c = synth_task(TaskKind::kReversal, 3000, 64, {4, 10}, 7);
  auto s = split_corpus(c, 200, 200, 1);
  CHECK(s.train.pairs.size() == 2600);
  std::unordered_set<uint64_t> train;
  for (const auto& p : s.train.pairs) train.insert(pair_hash(p));
  for (const auto* held : {&s.valid, &s.test}) {
    for (const auto& p : held->pairs) CHECK(train.count(pair_hash(p)) == 0);
  }
  auto again = split_corpus(c, 200, 200, 1);
  CHECK(again.test.pairs == s.test.pairs);
}
