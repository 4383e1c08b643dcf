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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dlmone/data.hpp"

namespace dlmone {

using Sentence = std::vector<int64_t>;

// All metrics operate on the model's own token-id stream.

/// Sentence BLEU up to 4-grams with brevity penalty. The unigram precision is
/// unsmoothed; orders 2..4 use add-one smoothing (m + 1) / (c + 1). With
/// several references, counts are clipped by the per-n-gram maximum over
/// references and the closest reference length (shorter on ties) is used for
/// the brevity penalty. An empty hypothesis scores 0.
double bleu(const Sentence& hypothesis, const Sentence& reference);
double bleu(const Sentence& hypothesis, const std::vector<Sentence>& references);

/// Corpus BLEU: pooled clipped counts and lengths, same smoothing.
double corpus_bleu(const std::vector<Sentence>& hypotheses,
                   const std::vector<Sentence>& references);

/// Mean sentence BLEU, the number reported as "BLEU".
double mean_sentence_bleu(const std::vector<Sentence>& hypotheses,
                          const std::vector<Sentence>& references);

inline constexpr double kRougeBeta = 1.2;

/// LCS-based ROUGE-L F-measure, F = (1 + b^2) P R / (R + b^2 P), b = 1.2.
double rouge_l(const Sentence& hypothesis, const Sentence& reference);

/// Per-sentence distinct-unigram ratio, averaged over non-empty sentences.
double dist1(const std::vector<Sentence>& hypotheses);

/// Mean over i of BLEU(hyp_i, {hyp_j : j != i}). One hypothesis gives 0.
double self_bleu(const std::vector<Sentence>& hypotheses);

/// Distinct 4-grams / total 4-grams pooled over the set. An empty pool gives
/// 0 and a warning on stderr.
double div4(const std::vector<Sentence>& hypotheses);

/// Pluggable semantic similarity. Returns nullopt when it cannot score.
class SemanticScorer {
 public:
  virtual ~SemanticScorer() = default;
  virtual std::string name() const = 0;
  virtual std::optional<double> score(const std::vector<Sentence>& hypotheses,
                                      const std::vector<Sentence>& references) = 0;
};

/// Fallback scorer: greedy cosine matching over a frozen token-embedding
/// table, F1 of the greedy precision and recall, averaged over pairs and
/// clamped to [0, 1].
class EmbeddingGreedyScorer final : public SemanticScorer {
 public:
  explicit EmbeddingGreedyScorer(torch::Tensor embeddings);
  std::string name() const override { return "embedding-greedy"; }
  std::optional<double> score(const std::vector<Sentence>& hypotheses,
                              const std::vector<Sentence>& references) override;
  double pair_score(const Sentence& hypothesis, const Sentence& reference) const;

 private:
  torch::Tensor unit_;  // row-normalized, float64
};

/// Runs the adapter if one is given; adapter failures are reported on
/// stderr and yield nullopt.
std::optional<double> semantic_score(const std::vector<Sentence>& hypotheses,
                                     const std::vector<Sentence>& references,
                                     SemanticScorer* scorer);

struct LatencyRow {
  int64_t steps = 0;
  double mean_s = 0.0;
  double std_s = 0.0;
  double loop_s = 0.0;
  double overhead_s = 0.0;
};

struct LatencyReport {
  std::string hardware;
  std::string note;
  int64_t repeats = 0;
  std::vector<LatencyRow> rows;
};

void write_latency(std::ostream& os, const LatencyReport& report);

struct MetricsReport {
  double bleu = 0.0;
  double rouge_l = 0.0;
  double dist1 = 0.0;
  double self_bleu = 0.0;
  double div4 = 0.0;
  std::optional<double> semantic;
  std::optional<LatencyReport> latency;
  std::string checkpoint_id;
  std::string dataset_id;
  int64_t candidates = 1;
  uint64_t seed = 0;
};

/// Quality metrics for one hypothesis per reference. Diversity metrics
/// (self-BLEU, Div-4) are computed over the candidate sets when given, else
/// over all hypotheses.
MetricsReport evaluate(const std::vector<Sentence>& hypotheses,
                       const std::vector<Sentence>& references,
                       const std::vector<std::vector<Sentence>>& candidate_sets = {},
                       SemanticScorer* scorer = nullptr);

/// Structured text with keys BLEU, ROUGE-L, BERT, Dist-1, SelfBLEU, Div-4.
void write_report(std::ostream& os, const MetricsReport& report);
std::string format_report(const MetricsReport& report);

/// Parses the [metrics] and [run] sections written by write_report.
MetricsReport parse_report(const std::string& text);

}  // namespace dlmone
