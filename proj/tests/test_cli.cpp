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
#include <sstream>

#include "dlmone/checkpoint.hpp"
#include "dlmone/cli.hpp"
#include "dlmone/config.hpp"
#include "dlmone/metrics.hpp"

namespace dlmone {

std::ostream& operator<<(std::ostream& os, const ValidationRecord& r) {
  return os << "{step=" << r.step << " bleu=" << r.bleu << "}";
}

}  // namespace dlmone

using namespace dlmone;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "dlmone_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* kTinyConfig = R"([model]
embed_dim = 8
hidden = 16
layers = 1
heads = 2

[data]
vocab_size = 16
n_train = 40
n_valid = 8
n_test = 8
min_len = 2
max_len = 4

[teacher]
steps = 20
batch_size = 8
lr = 0.001
log_every = 10

[distill]
budget_steps = 4
val_every = 2
batch_size = 4
lr_psi = 0.001
lr_theta = 0.001

[bench]
steps_list = 1,2
repeats = 3
)";

int run(std::vector<std::string> args, std::string* out_text = nullptr) {
  std::ostringstream out, err;
  int code = run_command(args, out, err);
  if (out_text) *out_text = out.str();
  if (code != 0) MESSAGE(err.str());
  return code;
}

}  // namespace

TEST_CASE("config round trip, overrides and errors") {
  RunConfig c = parse_config(kTinyConfig);
  CHECK(c.model.hidden == 16);
  CHECK(c.distill.mu == 1.2);
  CHECK(c.bench.steps_list == std::vector<int>{1, 2});
  CHECK(parse_config(format_config(c)).distill.t_init == c.distill.t_init);
  CHECK(format_config(parse_config(format_config(c))) == format_config(c));
  CHECK(config_hash(c) == config_hash(parse_config(format_config(c))));

  auto o = apply_overrides(c, {"distill.mu=1.0", "distill.stage=2"});
  CHECK(o.distill.mu == 1.0);
  CHECK(config_hash(o) != config_hash(c));
  for (const char* bad : {"[distill]\nmoo = 1\n", "[nowhere]\nx = 1\n", "[distill]\nmu = fast\n"}) {
    try {
      parse_config(bad);
      FAIL("expected a config error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kConfig);
    }
  }
  CHECK_THROWS_AS(apply_overrides(c, {"mu=1"}), Error);
  CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), Error);
}

TEST_CASE("exit statuses") {
  CHECK(run({"frobnicate"}) == kExitUsage);
  CHECK(run({}) == kExitUsage);
  auto dir = fresh_dir("status");
  CHECK(run({"pretrain-teacher", "--config", (dir / "none.ini").string(), "--out",
             (dir / "t").string()}) == kExitConfig);
  CHECK(run({"generate", "--ckpt", (dir / "absent").string(), "--prompts", "x", "--out", "y"}) ==
        kExitMissingCheckpoint);
  CHECK(exit_code_for(ErrorKind::kDivergence) == kExitDivergence);
  CHECK(exit_code_for(ErrorKind::kData) != exit_code_for(ErrorKind::kIo));
}

TEST_CASE("end to end on a tiny reversal task") {
  auto dir = fresh_dir("e2e");
  std::ofstream(dir / "tiny.ini") << kTinyConfig;
  const auto cfg = (dir / "tiny.ini").string();
  const auto teacher = (dir / "teacher").string();
  const auto s1 = (dir / "s1").string();
  const auto s2 = (dir / "s2").string();

  REQUIRE(run({"pretrain-teacher", "--config", cfg, "--out", teacher}) == kExitOk);
  for (const char* f : {"params.pt", "config.ini", "schedule.txt", "vocab.txt", "step.txt",
                        "history.txt", "manifest.txt", "train.log", "valid.jsonl"}) {
    CHECK(fs::exists(fs::path(teacher) / f));
  }

  CHECK(run({"distill", "--stage", "2", "--teacher", teacher, "--out", s2}) == kExitMissingCheckpoint);
  REQUIRE(run({"distill", "--stage", "1", "--teacher", teacher, "--out", s1}) == kExitOk);
  REQUIRE(run({"distill", "--stage", "2", "--teacher", teacher, "--student", s1, "--out", s2}) == kExitOk);

  auto ck = load_checkpoint(s1);
  REQUIRE(ck.history.size() == 2);
  CHECK(ck.history[0].step == 2);
  CHECK(ck.history[1].step == 4);
  std::ifstream manifest(fs::path(s1) / "manifest.txt");
  std::string text((std::istreambuf_iterator<char>(manifest)), std::istreambuf_iterator<char>());
  CHECK(text.find("config_hash=") != std::string::npos);
  CHECK(text.find("distill_seed=") != std::string::npos);
  CHECK(text.find("code_version=") != std::string::npos);

  // One-step generation reproduces the in-training validation BLEU.
  const auto gens = (dir / "gen.jsonl").string();
  const auto report = (dir / "report.txt").string();
  REQUIRE(run({"generate", "--ckpt", s1, "--prompts", (fs::path(teacher) / "valid.jsonl").string(),
               "--out", gens, "--steps", "1", "--seed", std::to_string(ck.config.distill.val_seed)}) == kExitOk);
  REQUIRE(run({"evaluate", "--generations", gens, "--ckpt", s1, "--out", report}) == kExitOk);
  std::ifstream rep_in(report);
  std::string rep_text((std::istreambuf_iterator<char>(rep_in)), std::istreambuf_iterator<char>());
  auto rep = parse_report(rep_text);
  const auto best = ck.history[*best_index(ck.history)].bleu;
  CHECK(std::abs(rep.bleu - best) <= 0.005);
  CHECK(rep.semantic.has_value());

  // MBR writes candidate pools; evaluate computes diversity over them.
  const auto mbr = (dir / "mbr.jsonl").string();
  REQUIRE(run({"generate", "--ckpt", s1, "--prompts", (fs::path(teacher) / "test.jsonl").string(),
               "--out", mbr, "--steps", "2", "--mbr", "3"}) == kExitOk);
  auto recs = read_generations(mbr);
  REQUIRE_FALSE(recs.empty());
  CHECK(recs[0].candidates.size() == 3);
  CHECK(run({"evaluate", "--generations", mbr, "--out", (dir / "mbr.txt").string()}) == kExitOk);

  REQUIRE(run({"generate", "--ckpt", teacher, "--teacher", "--prompts",
               (fs::path(teacher) / "test.jsonl").string(), "--out", (dir / "t.jsonl").string(),
               "--steps", "5"}) == kExitOk);
  CHECK(run({"bench", "--ckpt", s1, "--out", (dir / "bench.txt").string()}) == kExitOk);
  CHECK(fs::exists(dir / "bench.txt"));
}

TEST_CASE("checkpoint round trip is bit exact") {
  auto dir = fresh_dir("ckpt");
  RunConfig cfg = parse_config(kTinyConfig);
  auto net = make_network(cfg.model, Role::kEstimator, 3);
  Checkpoint ck{net, cfg, synth_vocab(cfg.model.vocab_size), 17, {{200, 0.25}, {400, 0.5}}};
  save_checkpoint(dir, ck);
  auto back = load_checkpoint(dir);
  CHECK(back.step == 17);
  CHECK(back.history == ck.history);
  CHECK(back.net->has_disc_head());
  CHECK(back.vocab == ck.vocab);
  auto a = net->named_parameters();
  for (const auto& item : back.net->named_parameters()) {
    CHECK(torch::equal(item.value(), a[item.key()]));
  }
  fs::remove(dir / "params.pt");
  try {
    load_checkpoint(dir);
    FAIL("expected a missing-checkpoint error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMissingCheckpoint);
  }
}
