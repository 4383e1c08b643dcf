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

#include "dlmone/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "dlmone/common.hpp"

namespace dlmone {

namespace {

constexpr int kMaxOrder = 4;

using NgramCounts = std::map<Sentence, int64_t>;

NgramCounts count_ngrams(const Sentence& s, int n) {
  NgramCounts counts;
  if (static_cast<int>(s.size()) < n) return counts;
  for (size_t i = 0; i + n <= s.size(); ++i) {
    ++counts[Sentence(s.begin() + i, s.begin() + i + n)];
  }
  return counts;
}

struct BleuStats {
  std::array<int64_t, kMaxOrder> matches{};
  std::array<int64_t, kMaxOrder> totals{};
  int64_t hyp_len = 0;
  int64_t ref_len = 0;

  void add(const BleuStats& o) {
    for (int n = 0; n < kMaxOrder; ++n) {
      matches[n] += o.matches[n];
      totals[n] += o.totals[n];
    }
    hyp_len += o.hyp_len;
    ref_len += o.ref_len;
  }
};

BleuStats bleu_stats(const Sentence& hyp, const std::vector<Sentence>& refs) {
  BleuStats st;
  st.hyp_len = static_cast<int64_t>(hyp.size());
  // Closest reference length, shorter on ties.
  int64_t best = -1;
  for (const auto& r : refs) {
    const auto len = static_cast<int64_t>(r.size());
    const auto d = std::llabs(len - st.hyp_len);
    if (best < 0 || d < std::llabs(best - st.hyp_len) ||
        (d == std::llabs(best - st.hyp_len) && len < best)) {
      best = len;
    }
  }
  st.ref_len = std::max<int64_t>(best, 0);
  for (int n = 1; n <= kMaxOrder; ++n) {
    auto hyp_counts = count_ngrams(hyp, n);
    NgramCounts max_ref;
    for (const auto& r : refs) {
      for (const auto& [g, c] : count_ngrams(r, n)) {
        auto& slot = max_ref[g];
        slot = std::max(slot, c);
      }
    }
    for (const auto& [g, c] : hyp_counts) {
      st.totals[n - 1] += c;
      auto it = max_ref.find(g);
      if (it != max_ref.end()) st.matches[n - 1] += std::min(c, it->second);
    }
  }
  return st;
}

double bleu_from_stats(const BleuStats& st) {
  if (st.hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < kMaxOrder; ++n) {
    double p;
    if (n == 0) {
      if (st.matches[0] == 0) return 0.0;
      p = static_cast<double>(st.matches[0]) / static_cast<double>(st.totals[0]);
    } else {
      p = static_cast<double>(st.matches[n] + 1) / static_cast<double>(st.totals[n] + 1);
    }
    log_sum += std::log(p);
  }
  const double bp = st.hyp_len > st.ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(st.ref_len) /
                                             static_cast<double>(st.hyp_len));
  return bp * std::exp(log_sum / kMaxOrder);
}

int64_t lcs_length(const Sentence& a, const Sentence& b) {
  std::vector<int64_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double bleu(const Sentence& hypothesis, const Sentence& reference) {
  return bleu(hypothesis, std::vector<Sentence>{reference});
}

double bleu(const Sentence& hypothesis, const std::vector<Sentence>& references) {
  if (hypothesis.empty() || references.empty()) return 0.0;
  return bleu_from_stats(bleu_stats(hypothesis, references));
}

double corpus_bleu(const std::vector<Sentence>& hypotheses,
                   const std::vector<Sentence>& references) {
  require(hypotheses.size() == references.size(),
          "corpus_bleu needs one reference per hypothesis");
  BleuStats total;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    total.add(bleu_stats(hypotheses[i], {references[i]}));
  }
  return bleu_from_stats(total);
}

double mean_sentence_bleu(const std::vector<Sentence>& hypotheses,
                          const std::vector<Sentence>& references) {
  require(hypotheses.size() == references.size(),
          "mean_sentence_bleu needs one reference per hypothesis");
  if (hypotheses.empty()) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < hypotheses.size(); ++i) sum += bleu(hypotheses[i], references[i]);
  return sum / static_cast<double>(hypotheses.size());
}

double rouge_l(const Sentence& hypothesis, const Sentence& reference) {
  if (hypothesis.empty() || reference.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(hypothesis, reference));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(hypothesis.size());
  const double r = lcs / static_cast<double>(reference.size());
  const double b2 = kRougeBeta * kRougeBeta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

double dist1(const std::vector<Sentence>& hypotheses) {
  // Extended precision so that simple rational means round to the nearest double.
  long double sum = 0.0L;
  size_t n = 0;
  for (const auto& h : hypotheses) {
    if (h.empty()) continue;
    std::set<int64_t> distinct(h.begin(), h.end());
    sum += static_cast<long double>(distinct.size()) / static_cast<long double>(h.size());
    ++n;
  }
  return n == 0 ? 0.0 : static_cast<double>(sum / static_cast<long double>(n));
}

double self_bleu(const std::vector<Sentence>& hypotheses) {
  if (hypotheses.size() < 2) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    std::vector<Sentence> others;
    others.reserve(hypotheses.size() - 1);
    for (size_t j = 0; j < hypotheses.size(); ++j) {
      if (j != i) others.push_back(hypotheses[j]);
    }
    sum += bleu(hypotheses[i], others);
  }
  return sum / static_cast<double>(hypotheses.size());
}

double div4(const std::vector<Sentence>& hypotheses) {
  std::set<Sentence> distinct;
  int64_t total = 0;
  for (const auto& h : hypotheses) {
    for (const auto& [g, c] : count_ngrams(h, 4)) {
      distinct.insert(g);
      total += c;
    }
  }
  if (total == 0) {
    std::cerr << "warning: div4 over an empty 4-gram pool; reporting 0\n";
    return 0.0;
  }
  return static_cast<double>(distinct.size()) / static_cast<double>(total);
}

EmbeddingGreedyScorer::EmbeddingGreedyScorer(torch::Tensor embeddings) {
  require(embeddings.dim() == 2, "embedding table must be [V, d]");
  auto e = embeddings.detach().to(torch::kCPU, torch::kFloat64);
  unit_ = e / e.norm(2, 1, true).clamp_min(1e-12);
}

double EmbeddingGreedyScorer::pair_score(const Sentence& hypothesis,
                                         const Sentence& reference) const {
  if (hypothesis.empty() || reference.empty()) return 0.0;
  auto idx = [](const Sentence& s) {
    return torch::tensor(std::vector<int64_t>(s.begin(), s.end()), torch::kLong);
  };
  auto h = unit_.index_select(0, idx(hypothesis));
  auto r = unit_.index_select(0, idx(reference));
  auto sim = torch::matmul(h, r.t());  // [|h|, |r|]
  const double precision = std::get<0>(sim.max(1)).mean().item<double>();
  const double recall = std::get<0>(sim.max(0)).mean().item<double>();
  if (precision + recall <= 0.0) return 0.0;
  const double f = 2.0 * precision * recall / (precision + recall);
  return std::clamp(f, 0.0, 1.0);
}

std::optional<double> EmbeddingGreedyScorer::score(
    const std::vector<Sentence>& hypotheses,
    const std::vector<Sentence>& references) {
  if (hypotheses.size() != references.size() || hypotheses.empty()) return std::nullopt;
  double sum = 0.0;
  for (size_t i = 0; i < hypotheses.size(); ++i) sum += pair_score(hypotheses[i], references[i]);
  return sum / static_cast<double>(hypotheses.size());
}

std::optional<double> semantic_score(const std::vector<Sentence>& hypotheses,
                                     const std::vector<Sentence>& references,
                                     SemanticScorer* scorer) {
  if (scorer == nullptr) return std::nullopt;
  try {
    return scorer->score(hypotheses, references);
  } catch (const std::exception& e) {
    std::cerr << "warning: semantic scorer '" << scorer->name()
              << "' failed: " << e.what() << "\n";
    return std::nullopt;
  }
}

MetricsReport evaluate(const std::vector<Sentence>& hypotheses,
                       const std::vector<Sentence>& references,
                       const std::vector<std::vector<Sentence>>& candidate_sets,
                       SemanticScorer* scorer) {
  require(hypotheses.size() == references.size(),
          "evaluate needs one reference per hypothesis");
  MetricsReport rep;
  rep.bleu = mean_sentence_bleu(hypotheses, references);
  double rouge = 0.0;
  for (size_t i = 0; i < hypotheses.size(); ++i) rouge += rouge_l(hypotheses[i], references[i]);
  rep.rouge_l = hypotheses.empty() ? 0.0 : rouge / static_cast<double>(hypotheses.size());
  rep.dist1 = dist1(hypotheses);
  if (candidate_sets.empty()) {
    rep.self_bleu = self_bleu(hypotheses);
    rep.div4 = div4(hypotheses);
  } else {
    // Both diversity metrics are taken over the same candidate sets.
    double sb = 0.0;
    double d4 = 0.0;
    for (const auto& set : candidate_sets) {
      sb += self_bleu(set);
      d4 += div4(set);
    }
    rep.self_bleu = sb / static_cast<double>(candidate_sets.size());
    rep.div4 = d4 / static_cast<double>(candidate_sets.size());
    rep.candidates = static_cast<int64_t>(candidate_sets.front().size());
  }
  rep.semantic = semantic_score(hypotheses, references, scorer);
  return rep;
}

void write_latency(std::ostream& os, const LatencyReport& report) {
  os << "[latency]\n";
  os << "hardware = " << report.hardware << "\n";
  if (!report.note.empty()) os << "note = " << report.note << "\n";
  os << "repeats = " << report.repeats << "\n";
  os << "# steps mean_s std_s loop_s overhead_s\n";
  os << std::setprecision(9);
  for (const auto& r : report.rows) {
    os << "row = " << r.steps << ' ' << r.mean_s << ' ' << r.std_s << ' '
       << r.loop_s << ' ' << r.overhead_s << "\n";
  }
}

void write_report(std::ostream& os, const MetricsReport& rep) {
  os << std::setprecision(17);
  os << "[metrics]\n";
  os << "BLEU = " << rep.bleu << "\n";
  os << "ROUGE-L = " << rep.rouge_l << "\n";
  if (rep.semantic) os << "BERT = " << *rep.semantic << "\n";
  os << "Dist-1 = " << rep.dist1 << "\n";
  os << "SelfBLEU = " << rep.self_bleu << "\n";
  os << "Div-4 = " << rep.div4 << "\n";
  os << "\n[run]\n";
  os << "checkpoint = " << rep.checkpoint_id << "\n";
  os << "dataset = " << rep.dataset_id << "\n";
  os << "candidates = " << rep.candidates << "\n";
  os << "seed = " << rep.seed << "\n";
  if (rep.latency) {
    os << "\n";
    write_latency(os, *rep.latency);
  }
}

std::string format_report(const MetricsReport& report) {
  std::ostringstream os;
  write_report(os, report);
  return os.str();
}

MetricsReport parse_report(const std::string& text) {
  MetricsReport rep;
  std::istringstream in(text);
  std::string line, section;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::kData, "malformed report line: " + line);
    const auto key = trim(line.substr(0, eq));
    const auto val = trim(line.substr(eq + 1));
    if (section == "metrics") {
      const double v = std::stod(val);
      if (key == "BLEU") rep.bleu = v;
      else if (key == "ROUGE-L") rep.rouge_l = v;
      else if (key == "BERT") rep.semantic = v;
      else if (key == "Dist-1") rep.dist1 = v;
      else if (key == "SelfBLEU") rep.self_bleu = v;
      else if (key == "Div-4") rep.div4 = v;
    } else if (section == "run") {
      if (key == "checkpoint") rep.checkpoint_id = val;
      else if (key == "dataset") rep.dataset_id = val;
      else if (key == "candidates") rep.candidates = std::stoll(val);
      else if (key == "seed") rep.seed = std::stoull(val);
    } else if (section == "latency") {
      if (!rep.latency) rep.latency.emplace();
      if (key == "hardware") rep.latency->hardware = val;
      else if (key == "note") rep.latency->note = val;
      else if (key == "repeats") rep.latency->repeats = std::stoll(val);
      else if (key == "row") {
        std::istringstream rs(val);
        LatencyRow row;
        rs >> row.steps >> row.mean_s >> row.std_s >> row.loop_s >> row.overhead_s;
        rep.latency->rows.push_back(row);
      }
    }
  }
  return rep;
}

}  // namespace dlmone
