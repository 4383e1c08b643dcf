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

#include "dlmone/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_map>

#include <CLI11.hpp>
#include <json.hpp>

#include "dlmone/checkpoint.hpp"
#include "dlmone/distill.hpp"
#include "dlmone/metrics.hpp"
#include "dlmone/sampler.hpp"
#include "dlmone/selftest.hpp"
#include "dlmone/teacher.hpp"

namespace dlmone {

namespace fs = std::filesystem;
using json = nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return kExitInvalidArgument;
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kData: return kExitData;
    case ErrorKind::kMissingCheckpoint: return kExitMissingCheckpoint;
    case ErrorKind::kDivergence: return kExitDivergence;
    case ErrorKind::kIo: return kExitIo;
  }
  return kExitFailure;
}

Dataset prepare_dataset(const DataConfig& cfg, int64_t seq_len) {
  Dataset ds;
  if (cfg.train_file.empty()) {
    const size_t total = static_cast<size_t>(cfg.n_train + cfg.n_valid + cfg.n_test);
    auto corpus = synth_task(cfg.task, total, cfg.vocab_size, {cfg.min_len, cfg.max_len},
                             cfg.seed, seq_len);
    auto splits = split_corpus(corpus, static_cast<size_t>(cfg.n_valid),
                               static_cast<size_t>(cfg.n_test), derive_seed(cfg.seed, 1));
    ds.vocab = synth_vocab(cfg.vocab_size);
    ds.train = encode_corpus(splits.train, ds.vocab);
    ds.valid = encode_corpus(splits.valid, ds.vocab);
    ds.test = encode_corpus(splits.test, ds.vocab);
    return ds;
  }
  auto train = load_pairs(cfg.train_file, seq_len, Split::kTrain);
  ds.vocab = build_vocab(train, cfg.vocab_size);
  ds.train = encode_corpus(train, ds.vocab);
  if (!cfg.valid_file.empty()) {
    ds.valid = encode_corpus(load_pairs(cfg.valid_file, seq_len, Split::kValid), ds.vocab);
  }
  if (!cfg.test_file.empty()) {
    ds.test = encode_corpus(load_pairs(cfg.test_file, seq_len, Split::kTest), ds.vocab);
  }
  return ds;
}

void write_generations(const fs::path& path, const std::vector<GenerationRecord>& records) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& r : records) {
    json j = {{"src", r.src}, {"hyp", r.hyp}};
    if (r.ref) j["ref"] = *r.ref;
    if (!r.candidates.empty()) j["candidates"] = r.candidates;
    out << j.dump() << "\n";
  }
}

namespace {

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kData, "cannot open " + path.string());
  std::vector<json> out;
  size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      fail(ErrorKind::kData, path.string() + ":" + std::to_string(lineno) + ": malformed JSON");
    }
    if (!out.back().is_object() || !out.back().contains("src") || !out.back()["src"].is_string()) {
      fail(ErrorKind::kData,
           path.string() + ":" + std::to_string(lineno) + ": missing string field \"src\"");
    }
  }
  if (out.empty()) fail(ErrorKind::kData, path.string() + " has no records");
  return out;
}

std::optional<std::string> opt_string(const json& j, const char* key) {
  if (j.contains(key) && j[key].is_string()) return j[key].get<std::string>();
  return std::nullopt;
}

}  // namespace

std::vector<GenerationRecord> read_generations(const fs::path& path) {
  std::vector<GenerationRecord> out;
  for (const auto& j : read_jsonl(path)) {
    GenerationRecord r;
    r.src = j["src"].get<std::string>();
    auto hyp = opt_string(j, "hyp");
    if (!hyp) fail(ErrorKind::kData, path.string() + ": record without \"hyp\"");
    r.hyp = *hyp;
    r.ref = opt_string(j, "ref");
    if (j.contains("candidates")) r.candidates = j["candidates"].get<std::vector<std::string>>();
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<GenerationRecord> read_prompts(const fs::path& path) {
  std::vector<GenerationRecord> out;
  for (const auto& j : read_jsonl(path)) {
    GenerationRecord r;
    r.src = j["src"].get<std::string>();
    r.ref = opt_string(j, "trg");
    if (!r.ref) r.ref = opt_string(j, "ref");
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

const WhitespaceTokenizer kTokenizer;

std::string detok(const Vocabulary& vocab, const TokenIds& ids) {
  return kTokenizer.detokenize(vocab.decode(ids));
}

RunConfig base_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_config(path);
  return apply_overrides(cfg, overrides);
}

void save_pairs_jsonl(const fs::path& path, const std::vector<TokenPair>& pairs,
                      const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& p : pairs) {
    out << json{{"src", detok(vocab, p.src)}, {"trg", detok(vocab, p.trg)}}.dump() << "\n";
  }
}

int cmd_pretrain(const std::string& config_path, const std::vector<std::string>& overrides,
                 const fs::path& out_dir, std::ostream& out) {
  auto cfg = base_config(config_path, overrides);
  auto ds = prepare_dataset(cfg.data, cfg.model.seq_len);
  cfg.model.vocab_size = ds.vocab.size();
  fs::create_directories(out_dir);
  save_pairs_jsonl(out_dir / "train.jsonl", ds.train, ds.vocab);
  save_pairs_jsonl(out_dir / "valid.jsonl", ds.valid, ds.vocab);
  save_pairs_jsonl(out_dir / "test.jsonl", ds.test, ds.vocab);

  const auto sched = cfg.schedule.build();
  auto net = make_network(cfg.model, Role::kTeacher, cfg.teacher.seed);
  std::ofstream log(out_dir / "train.log");
  auto stats = pretrain_teacher(net, ds.train, sched, cfg.teacher, &log);
  const double vdsm = ds.valid.empty() ? 0.0 : validation_dsm(net, ds.valid, sched, 99);
  save_checkpoint(out_dir, Checkpoint{net, cfg, ds.vocab, stats.steps, {}});
  write_manifest(out_dir, "pretrain-teacher", cfg,
                 {{"steps", std::to_string(stats.steps)}, {"valid_dsm", std::to_string(vdsm)}});
  out << "teacher saved to " << out_dir.string() << " (steps=" << stats.steps
      << " last_dsm=" << stats.last_dsm << " valid_dsm=" << vdsm << ")\n";
  return kExitOk;
}

int cmd_distill(const std::string& config_path, const std::vector<std::string>& overrides,
                int stage, const fs::path& teacher_dir, const std::string& student_dir,
                const fs::path& out_dir, std::ostream& out) {
  at::globalContext().setDeterministicAlgorithms(true, false);
  auto teacher = load_checkpoint(teacher_dir);
  RunConfig cfg = config_path.empty() ? teacher.config : load_config(config_path);
  cfg = apply_overrides(cfg, overrides);
  cfg.distill.stage = stage;
  cfg.model = teacher.config.model;
  cfg.schedule = teacher.config.schedule;
  cfg.data = teacher.config.data;

  std::optional<Checkpoint> stage1;
  if (stage >= 2) {
    if (student_dir.empty()) {
      fail(ErrorKind::kMissingCheckpoint,
           "distill --stage " + std::to_string(stage) + " requires --student <stage-1 checkpoint>");
    }
    stage1 = load_checkpoint(student_dir);
  }
  auto ds = prepare_dataset(cfg.data, cfg.model.seq_len);
  if (!(ds.vocab == teacher.vocab)) fail(ErrorKind::kData, "dataset vocabulary differs from the teacher's");
  const auto sched = cfg.schedule.build();

  fs::create_directories(out_dir);
  std::ofstream log(out_dir / "distill.log");
  log.precision(9);
  auto res = run_stage(cfg.distill, teacher.net, stage1 ? &stage1->net : nullptr, ds.train,
                       ds.valid, sched, &log);
  save_checkpoint(out_dir, Checkpoint{res.theta, cfg, ds.vocab, res.best_step, res.history});
  write_manifest(out_dir, "distill --stage " + std::to_string(stage), cfg,
                 {{"teacher", teacher_dir.string()},
                  {"student", student_dir},
                  {"best_step", std::to_string(res.best_step)},
                  {"embedding_sha256", res.embedding_hash_after}});
  out << "stage " << stage << " done: steps=" << res.steps_run << " best_step=" << res.best_step;
  if (auto b = best_index(res.history)) out << " best_val_bleu=" << res.history[*b].bleu;
  out << "\n";
  return kExitOk;
}

struct GenerateArgs {
  fs::path ckpt;
  fs::path prompts;
  fs::path output;
  int steps = 1;
  int mbr = 1;
  bool teacher = false;
  std::optional<uint64_t> seed;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  auto ckpt = load_checkpoint(a.ckpt);
  const auto& cfg = ckpt.config;
  const auto sched = cfg.schedule.build();
  const uint64_t seed = a.seed.value_or(cfg.generate.seed);
  if (a.steps < 1) fail(ErrorKind::kInvalidArgument, "--steps must be >= 1");
  if (a.mbr < 1) fail(ErrorKind::kInvalidArgument, "--mbr must be >= 1");

  auto records = read_prompts(a.prompts);
  std::vector<TokenIds> sources;
  for (const auto& r : records) {
    auto ids = ckpt.vocab.encode(kTokenizer.tokenize(r.src));
    if (static_cast<int64_t>(ids.size()) + 1 >= cfg.model.seq_len) {
      fail(ErrorKind::kData, "prompt too long for L=" + std::to_string(cfg.model.seq_len));
    }
    sources.push_back(std::move(ids));
  }

  const auto B = static_cast<size_t>(std::max<int64_t>(1, cfg.generate.batch_size));
  std::vector<std::vector<TokenIds>> cands(records.size());
  int64_t nfe = 0;
  for (int k = 0; k < a.mbr; ++k) {
    const uint64_t cand_seed = k == 0 ? seed : derive_seed(seed, 0x4d4252ULL + static_cast<uint64_t>(k));
    for (size_t start = 0; start < sources.size(); start += B) {
      const size_t end = std::min(sources.size(), start + B);
      std::vector<TokenIds> chunk(sources.begin() + static_cast<long>(start),
                                  sources.begin() + static_cast<long>(end));
      SampleResult res =
          a.teacher ? teacher_sample(ckpt.net, chunk, a.steps, sched, cand_seed, start,
                                     cfg.generate.teacher_mode)
                    : multi_step_generate(ckpt.net, chunk, a.steps, cfg.distill, sched, cand_seed,
                                          start);
      nfe += res.nfe * static_cast<int64_t>(chunk.size());
      for (size_t i = 0; i < res.targets.size(); ++i) cands[start + i].push_back(res.targets[i]);
    }
  }
  for (size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    const size_t pick = mbr_index(cands[i]);
    r.hyp = detok(ckpt.vocab, cands[i][pick]);
    if (a.mbr > 1) {
      for (const auto& c : cands[i]) r.candidates.push_back(detok(ckpt.vocab, c));
    }
  }
  write_generations(a.output, records);
  auto dir = a.output.parent_path().empty() ? fs::path(".") : a.output.parent_path();
  write_manifest(dir, "generate", cfg,
                 {{"checkpoint", a.ckpt.string()},
                  {"prompts", a.prompts.string()},
                  {"steps", std::to_string(a.steps)},
                  {"mbr", std::to_string(a.mbr)},
                  {"sampler", a.teacher ? "teacher" : "student"},
                  {"seed", std::to_string(seed)}});
  out << "wrote " << records.size() << " generations to " << a.output.string()
      << " (NFE per sample=" << (records.empty() ? 0 : nfe / static_cast<int64_t>(records.size()))
      << ")\n";
  return kExitOk;
}

int cmd_evaluate(const fs::path& generations, const std::string& ckpt_dir, const fs::path& report_path,
                 std::ostream& out) {
  auto records = read_generations(generations);
  std::optional<Checkpoint> ckpt;
  if (!ckpt_dir.empty()) ckpt = load_checkpoint(ckpt_dir);

  // Map words to ids: through the checkpoint vocabulary when given, else a
  // local table (metrics only need a consistent mapping).
  std::unordered_map<std::string, int64_t> local;
  auto to_ids = [&](const std::string& text) {
    auto words = kTokenizer.tokenize(text);
    if (ckpt) return ckpt->vocab.encode(words);
    TokenIds ids;
    for (const auto& w : words) ids.push_back(local.emplace(w, static_cast<int64_t>(local.size())).first->second);
    return ids;
  };
  std::vector<Sentence> hyps, refs;
  std::vector<std::vector<Sentence>> cand_sets;
  for (const auto& r : records) {
    if (!r.ref) fail(ErrorKind::kData, "evaluate needs a \"ref\" on every record");
    hyps.push_back(to_ids(r.hyp));
    refs.push_back(to_ids(*r.ref));
    if (!r.candidates.empty()) {
      std::vector<Sentence> set;
      for (const auto& c : r.candidates) set.push_back(to_ids(c));
      cand_sets.push_back(std::move(set));
    }
  }
  std::unique_ptr<EmbeddingGreedyScorer> scorer;
  if (ckpt) scorer = std::make_unique<EmbeddingGreedyScorer>(ckpt->net->embedding());
  auto report = evaluate(hyps, refs, cand_sets, scorer.get());
  report.checkpoint_id = ckpt_dir.empty() ? "none" : ckpt_dir;
  report.dataset_id = generations.string();
  report.candidates = cand_sets.empty() ? 1 : static_cast<int64_t>(cand_sets.front().size());

  std::ofstream f(report_path);
  if (!f) fail(ErrorKind::kIo, "cannot write " + report_path.string());
  write_report(f, report);
  out << format_report(report);
  return kExitOk;
}

int cmd_bench(const fs::path& ckpt_dir, bool teacher, const std::vector<int>& steps_list,
              int repeats, const fs::path& report_path, std::ostream& out) {
  auto ckpt = load_checkpoint(ckpt_dir);
  const auto& cfg = ckpt.config;
  const auto sched = cfg.schedule.build();
  BenchOptions opts;
  opts.steps_list = steps_list.empty() ? cfg.bench.steps_list : steps_list;
  opts.repeats = repeats > 0 ? repeats : cfg.bench.repeats;
  opts.batch = cfg.bench.batch;

  auto ds = prepare_dataset(cfg.data, cfg.model.seq_len);
  const auto& pool = ds.test.empty() ? ds.valid : ds.test;
  if (pool.empty()) fail(ErrorKind::kData, "bench needs test or validation prompts");
  std::vector<TokenIds> sources;
  for (int64_t i = 0; i < opts.batch; ++i) sources.push_back(pool[static_cast<size_t>(i) % pool.size()].src);

  TimedSampler run = [&](int steps) {
    return teacher ? teacher_sample(ckpt.net, sources, steps, sched, cfg.generate.seed, 0,
                                    cfg.generate.teacher_mode)
                   : multi_step_generate(ckpt.net, sources, steps, cfg.distill, sched,
                                         cfg.generate.seed);
  };
  auto report = benchmark_latency(run, ckpt.vocab, opts);
  std::ofstream f(report_path);
  if (!f) fail(ErrorKind::kIo, "cannot write " + report_path.string());
  write_latency(f, report);
  write_latency(out, report);
  return kExitOk;
}

int cmd_selftest(std::ostream& out) {
  auto results = run_selftest(&out);
  size_t failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  out << (failed == 0 ? "selftest passed" : "selftest FAILED") << " (" << results.size() - failed
      << "/" << results.size() << ")\n";
  return failed == 0 ? kExitOk : kExitSelftest;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"dlmone: one-step distillation of embedding-space diffusion language models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(code_version()));

  std::string config_path;
  std::vector<std::string> overrides;

  auto* pre = app.add_subcommand("pretrain-teacher", "Train the diffusion teacher");
  std::string pre_out;
  pre->add_option("--config", config_path, "INI config file");
  pre->add_option("--set", overrides, "section.key=value override")->take_all();
  pre->add_option("--out", pre_out, "Output checkpoint directory")->required();

  auto* dist = app.add_subcommand("distill", "Distill a one-step student");
  int stage = 1;
  std::string teacher_dir, student_dir, dist_out;
  dist->add_option("--config", config_path, "INI config file (defaults to the teacher's)");
  dist->add_option("--set", overrides, "section.key=value override")->take_all();
  dist->add_option("--stage", stage, "Training stage")->check(CLI::Range(1, 2));
  dist->add_option("--teacher", teacher_dir, "Teacher checkpoint directory")->required();
  dist->add_option("--student", student_dir, "Stage-1 student checkpoint (stage 2)");
  dist->add_option("--out", dist_out, "Output checkpoint directory")->required();

  auto* gen = app.add_subcommand("generate", "Generate from a checkpoint");
  GenerateArgs ga;
  std::string ga_ckpt, ga_prompts, ga_out;
  uint64_t ga_seed = 0;
  gen->add_option("--ckpt", ga_ckpt, "Checkpoint directory")->required();
  gen->add_option("--prompts", ga_prompts, "JSONL prompts with \"src\" (and optional \"trg\")")->required();
  gen->add_option("--out", ga_out, "Output generations JSONL")->required();
  gen->add_option("--steps", ga.steps, "Denoiser evaluations per sample");
  gen->add_option("--mbr", ga.mbr, "MBR candidates per prompt");
  gen->add_flag("--teacher", ga.teacher, "Use the iterative teacher sampler");
  auto* seed_opt = gen->add_option("--seed", ga_seed, "Noise seed");

  auto* ev = app.add_subcommand("evaluate", "Score generations against references");
  std::string ev_gen, ev_ckpt, ev_out;
  ev->add_option("--generations", ev_gen, "Generations JSONL")->required();
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint for the vocabulary and semantic scorer");
  ev->add_option("--out", ev_out, "Report path")->required();

  auto* bench = app.add_subcommand("bench", "Latency benchmark");
  std::string b_ckpt, b_out;
  bool b_teacher = false;
  std::vector<int> b_steps;
  int b_repeats = 0;
  bench->add_option("--ckpt", b_ckpt, "Checkpoint directory")->required();
  bench->add_option("--out", b_out, "Report path")->required();
  bench->add_flag("--teacher", b_teacher, "Time the iterative teacher sampler");
  bench->add_option("--steps", b_steps, "Step counts")->delimiter(',');
  bench->add_option("--repeats", b_repeats, "Timed runs per step count (>= 3)");

  auto* self = app.add_subcommand("selftest", "Run the analytic-oracle suite");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << code_version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (pre->parsed()) return cmd_pretrain(config_path, overrides, pre_out, out);
    if (dist->parsed()) {
      return cmd_distill(config_path, overrides, stage, teacher_dir, student_dir, dist_out, out);
    }
    if (gen->parsed()) {
      ga.ckpt = ga_ckpt;
      ga.prompts = ga_prompts;
      ga.output = ga_out;
      if (seed_opt->count() > 0) ga.seed = ga_seed;
      return cmd_generate(ga, out);
    }
    if (ev->parsed()) return cmd_evaluate(ev_gen, ev_ckpt, ev_out, out);
    if (bench->parsed()) return cmd_bench(b_ckpt, b_teacher, b_steps, b_repeats, b_out, out);
    if (self->parsed()) return cmd_selftest(out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const c10::Error& e) {
    err << "error: " << e.what_without_backtrace() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  err << "error: no subcommand\n";
  return kExitUsage;
}

}  // namespace dlmone
