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

#include "dlmone/common.hpp"
#include "dlmone/sampler.hpp"

using namespace dlmone;

namespace {

ModelConfig small() {
  ModelConfig c;
  c.vocab_size = 12;
  c.seq_len = 12;
  c.embed_dim = 8;
  c.hidden = 16;
  c.layers = 1;
  c.heads = 2;
  c.time_steps = 2000;
  return c;
}

}  // namespace

TEST_CASE("re-noise ladder") {
  CHECK(renoise_ladder(1490, 0, 1) == std::vector<int>{1490});
  CHECK(renoise_ladder(1490, 0, 2) == std::vector<int>{1490, 745});
  auto l4 = renoise_ladder(1490, 0, 4);
  CHECK(l4.front() == 1490);
  CHECK(l4.back() == 1490 / 4);
  CHECK(std::is_sorted(l4.rbegin(), l4.rend()));
  CHECK(renoise_ladder(1490, 800, 4).back() == 800);
  CHECK_THROWS_AS(renoise_ladder(1490, 0, 0), Error);
}

TEST_CASE("one step matches generate_one_step then rounding") {
  auto sched = NoiseSchedule::build();
  auto theta = make_network(small(), Role::kGenerator, 1);
  DistillConfig cfg;
  std::vector<TokenIds> src = {{3, 4, 5}, {6, 7}};
  auto res = multi_step_generate(theta, src, 1, cfg, sched, 42);
  auto z = batch_noise(42, 0, 2, 0, {12, 8});
  torch::NoGradGuard no_grad;
  auto direct = generate_one_step(theta, src, z, cfg, sched);
  CHECK(torch::equal(res.final_values, direct.values));
  CHECK(res.full == round_to_tokens(direct.values, theta->embedding()));
}

TEST_CASE("nfe and condition invariant across steps") {
  auto sched = NoiseSchedule::build();
  auto theta = make_network(small(), Role::kGenerator, 2);
  DistillConfig cfg;
  std::vector<TokenIds> src = {{3, 4, 5}, {6, 7}};
  auto cond = theta->embed_condition(src);
  for (int steps : {1, 2, 4}) {
    bool ok = true;
    int calls = 0;
    StepObserver obs = [&](int, int, const EmbeddedSequence& s) {
      ++calls;
      ok = ok && torch::equal(s.values.index({cond.cond_mask}), cond.values.index({cond.cond_mask}));
    };
    auto res = multi_step_generate(theta, src, steps, cfg, sched, 7, 0, obs);
    CHECK(res.nfe == steps);
    CHECK(calls == steps);
    CHECK(ok);
    CHECK(torch::equal(res.final_values.index({cond.cond_mask}), cond.values.index({cond.cond_mask})));
  }
  CHECK_THROWS_AS(multi_step_generate(theta, src, 0, cfg, sched, 7), Error);
}

TEST_CASE("mbr selection") {
  const Sentence a = {1, 2, 3, 4, 5};
  const Sentence b = {6, 7, 8, 9};
  CHECK(mbr_select({b}) == b);
  CHECK(mbr_index({a, a, b}) == 0);
  CHECK(mbr_index({b, a, a}) == 1);
  CHECK(mbr_index({a, a, a}) == 0);
  CHECK_THROWS_AS(mbr_select({}), Error);
}

TEST_CASE("latency benchmark shape") {
  auto sched = NoiseSchedule::build();
  auto theta = make_network(small(), Role::kGenerator, 3);
  DistillConfig cfg;
  std::vector<TokenIds> src = {{3, 4, 5}};
  auto vocab = Vocabulary({"[PAD]", "[SEP]", "[UNK]", "a", "b", "c", "d", "e", "f", "g", "h", "i"});
  TimedSampler run = [&](int steps) { return multi_step_generate(theta, src, steps, cfg, sched, 1); };
  BenchOptions opts;
  opts.steps_list = {1, 8, 64};
  auto rep = benchmark_latency(run, vocab, opts);
  REQUIRE(rep.rows.size() == 3);
  CHECK(rep.repeats == 3);
  CHECK_FALSE(rep.hardware.empty());
  CHECK(rep.note.find("single worker") != std::string::npos);
  for (const auto& r : rep.rows) {
    CHECK(r.mean_s >= r.loop_s);
    CHECK(r.std_s >= 0.0);
  }
  CHECK(rep.rows[0].mean_s <= rep.rows[1].mean_s);
  CHECK(rep.rows[1].mean_s <= rep.rows[2].mean_s);
  opts.repeats = 2;
  CHECK_THROWS_AS(benchmark_latency(run, vocab, opts), Error);
}

TEST_CASE("denoiser loop time scales with steps") {
  auto sched = NoiseSchedule::build();
  auto net = make_network(small(), Role::kTeacher, 4);
  std::vector<TokenIds> src = {{3, 4, 5}};
  auto vocab = Vocabulary({"[PAD]", "[SEP]", "[UNK]", "a", "b", "c", "d", "e", "f", "g", "h", "i"});
  TimedSampler run = [&](int steps) { return teacher_sample(net, src, steps, sched, 2); };
  BenchOptions opts;
  opts.steps_list = {1, 100, 1000};
  auto rep = benchmark_latency(run, vocab, opts);
  REQUIRE(rep.rows.size() == 3);
  const double ratio = rep.rows[2].loop_s / rep.rows[1].loop_s;
  INFO("loop 1000/100 = " << ratio);
  CHECK(ratio >= 8.0);
  CHECK(ratio <= 12.0);
  // Loop time is bounded below by N single passes, with dispatch slack.
  for (const auto& r : rep.rows) {
    CHECK(r.mean_s >= r.loop_s);
    CHECK(r.loop_s >= static_cast<double>(r.steps) * rep.rows[0].loop_s * 0.8 - 1e-9);
  }
}
