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
#include "dlmone/seqmodel.hpp"

using namespace dlmone;

namespace {

ModelConfig small() {
  ModelConfig c;
  c.vocab_size = 12;
  c.seq_len = 10;
  c.embed_dim = 8;
  c.hidden = 16;
  c.layers = 2;
  c.heads = 2;
  c.time_steps = 100;
  return c;
}

}  // namespace

TEST_CASE("layout and target extraction") {
  auto ids = layout_tokens({5, 6}, {7, 8, 9}, 8);
  CHECK(ids == TokenIds{5, 6, Vocabulary::kSep, 7, 8, 9, Vocabulary::kPad, Vocabulary::kPad});
  CHECK(extract_target(ids, 3) == TokenIds{7, 8, 9});
  CHECK_THROWS_AS(layout_tokens({1, 2, 3}, {4, 5, 6}, 6), Error);
}

TEST_CASE("embed masks and shapes") {
  auto net = make_network(small(), Role::kTeacher, 1);
  auto e = net->embed(TokenPair{{4, 5}, {6}});
  CHECK(e.values.sizes() == torch::IntArrayRef({1, 10, 8}));
  CHECK(e.cond_mask[0][0].item<bool>());
  CHECK(e.cond_mask[0][2].item<bool>());  // [SEP]
  CHECK_FALSE(e.cond_mask[0][3].item<bool>());
  CHECK_FALSE(e.pad_mask.any().item<bool>());
  CHECK(torch::equal(e.values[0][1], net->embedding()[5]));
  CHECK(torch::equal(e.values[0][9], net->embedding()[Vocabulary::kPad]));

  auto c = net->embed_condition({{4, 5}});
  CHECK(torch::equal(c.values[0][0], net->embedding()[4]));
  CHECK(c.values[0][5].abs().sum().item<double>() == 0.0);

  CHECK_THROWS_AS(net->embed(TokenPair{{40}, {}}), Error);
  CHECK_THROWS_AS(net->embed(TokenPair{{4, 4, 4, 4, 4, 4}, {5, 5, 5, 5}}), Error);
}

TEST_CASE("denoise shape, nfe and time checks") {
  auto net = make_network(small(), Role::kTeacher, 2);
  auto e = net->embed(std::vector<TokenPair>{{{4}, {5}}, {{6, 7}, {8}}});
  net->reset_nfe();
  auto out = net->denoise(e, 50);
  CHECK(out.sizes() == e.values.sizes());
  CHECK(net->nfe() == 1);
  CHECK_THROWS_AS(net->denoise(e, 100), Error);
  CHECK_THROWS_AS(net->denoise(e, -1), Error);
  CHECK_THROWS_AS(net->discriminate(e, 5), Error);
  CHECK(net->logits(out).sizes() == torch::IntArrayRef({2, 10, 12}));
}

TEST_CASE("pad positions do not influence other outputs") {
  auto net = make_network(small(), Role::kEstimator, 3);
  net->eval();
  torch::NoGradGuard no_grad;
  auto e = net->embed(TokenPair{{4}, {5}});
  e.pad_mask[0][9] = true;
  auto changed = e.with_values(e.values.clone());
  changed.values[0][9] += 5.0;
  auto a = net->denoise(e, 10);
  auto b = net->denoise(changed, 10);
  using torch::indexing::Slice;
  CHECK(torch::allclose(a.index({0, Slice(0, 9)}), b.index({0, Slice(0, 9)}), 1e-5, 1e-6));
  CHECK(torch::allclose(net->discriminate(e, 10), net->discriminate(changed, 10), 1e-5, 1e-6));
}

TEST_CASE("estimator head and one-pass denoise_and_discriminate") {
  auto net = make_network(small(), Role::kEstimator, 4);
  REQUIRE(net->has_disc_head());
  net->eval();
  torch::NoGradGuard no_grad;
  auto e = net->embed(std::vector<TokenPair>{{{4}, {5}}, {{6}, {7}}});
  net->reset_nfe();
  auto [e_hat, logit] = net->denoise_and_discriminate(e, torch::tensor({3, 9}, torch::kLong));
  CHECK(net->nfe() == 1);
  CHECK(logit.sizes() == torch::IntArrayRef({2}));
  CHECK(torch::allclose(e_hat, net->denoise(e, torch::tensor({3, 9}, torch::kLong))));
}

TEST_CASE("clone, copy and trunk difference") {
  auto a = make_network(small(), Role::kTeacher, 5);
  auto b = clone_network(a, Role::kEstimator, false);
  CHECK(max_trunk_difference(a, b) == 0.0);
  CHECK(torch::equal(a->embedding(), b->embedding()));
  b->attach_disc_head(77);
  CHECK(max_trunk_difference(a, b) == 0.0);
  auto c = make_network(small(), Role::kTeacher, 6);
  CHECK(max_trunk_difference(a, c) > 0.0);
  copy_parameters(a, c, false);
  CHECK(max_trunk_difference(a, c) == 0.0);
}

TEST_CASE("parameter groups and freezing") {
  auto net = make_network(small(), Role::kEstimator, 7);
  const auto n_all = net->parameters().size();
  CHECK(net->trainable_parameters(true).size() == n_all);
  CHECK(net->trainable_parameters(false).size() == n_all - 1);
  CHECK(net->trunk_parameters().size() == n_all - 3);  // E, head weight, head bias
  net->set_embedding_frozen(true);
  CHECK_FALSE(net->embedding().requires_grad());
}

TEST_CASE("initialization is seeded") {
  auto a = make_network(small(), Role::kTeacher, 8);
  auto b = make_network(small(), Role::kTeacher, 8);
  CHECK(max_trunk_difference(a, b) == 0.0);
  CHECK(torch::equal(a->embedding(), b->embedding()));
  auto std = a->embedding().std().item<double>();
  CHECK(std > 0.7);
  CHECK(std < 1.3);
}

TEST_CASE("rounding picks the nearest row, smaller id on ties") {
  auto E = torch::tensor({{0.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}, {0.0, 2.0}});
  auto v = torch::tensor({{{0.9, 0.1}, {0.1, 1.8}, {0.0, 0.0}}});
  CHECK(round_to_tokens(v, E)[0] == TokenIds{1, 3, 0});
  auto embedded = E.index({torch::tensor({3, 0, 1}, torch::kLong)}).unsqueeze(0);
  CHECK(round_to_tokens(embedded, E)[0] == TokenIds{3, 0, 1});
  CHECK_THROWS_AS(round_to_tokens(torch::full({1, 1, 2}, NAN), E), Error);
  CHECK_THROWS_AS(check_embedding(E), Error);
  CHECK(min_pairwise_distance(torch::tensor({{0.0, 0.0}, {3.0, 4.0}})) == doctest::Approx(5.0));
}
