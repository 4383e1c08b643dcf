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

#include "dlmone/checkpoint.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "dlmone/common.hpp"

namespace dlmone {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out.precision(17);
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kMissingCheckpoint, "checkpoint file missing: " + path.string());
  return in;
}

std::map<std::string, std::string> read_kv(const fs::path& path) {
  auto in = open_in(path);
  std::map<std::string, std::string> kv;
  for (std::string line; std::getline(in, line);) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key,
                        const fs::path& path) {
  auto it = kv.find(key);
  if (it == kv.end()) fail(ErrorKind::kData, path.string() + " lacks '" + key + "'");
  return it->second;
}

}  // namespace

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  require(!ckpt.net.is_empty(), "save_checkpoint needs a network");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());

  {
    torch::serialize::OutputArchive archive;
    ckpt.net->save(archive);
    try {
      archive.save_to((dir / "params.pt").string());
    } catch (const c10::Error& e) {
      fail(ErrorKind::kIo, "cannot write params: " + std::string(e.what_without_backtrace()));
    }
  }
  save_config(ckpt.config, dir / "config.ini");
  {
    auto out = open_out(dir / "schedule.txt");
    out << "T=" << ckpt.config.schedule.steps << "\n"
        << "kind=" << to_string(ckpt.config.schedule.kind) << "\n"
        << "s_offset=" << ckpt.config.schedule.s_offset << "\n";
  }
  ckpt.vocab.save(dir / "vocab.txt");
  open_out(dir / "step.txt") << ckpt.step << "\n";
  {
    auto out = open_out(dir / "history.txt");
    for (const auto& r : ckpt.history) out << "step=" << r.step << " bleu=" << r.bleu << "\n";
  }
  {
    auto out = open_out(dir / "network.txt");
    out << "role=" << to_string(ckpt.net->role()) << "\n"
        << "disc_head=" << (ckpt.net->has_disc_head() ? 1 : 0) << "\n"
        << "embedding_sha256=" << tensor_sha256(ckpt.net->embedding()) << "\n";
  }
}

Checkpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    fail(ErrorKind::kMissingCheckpoint, "checkpoint directory not found: " + dir.string());
  }
  if (!fs::exists(dir / "params.pt")) {
    fail(ErrorKind::kMissingCheckpoint, "checkpoint has no params.pt: " + dir.string());
  }
  Checkpoint ckpt;
  ckpt.config = load_config(dir / "config.ini");

  auto sched = read_kv(dir / "schedule.txt");
  const auto& sc = ckpt.config.schedule;
  if (std::stoi(need(sched, "T", dir / "schedule.txt")) != sc.steps ||
      parse_schedule_kind(need(sched, "kind", dir / "schedule.txt")) != sc.kind ||
      std::stod(need(sched, "s_offset", dir / "schedule.txt")) != sc.s_offset) {
    fail(ErrorKind::kData, "schedule record disagrees with config in " + dir.string());
  }

  auto net_kv = read_kv(dir / "network.txt");
  const Role role = parse_role(need(net_kv, "role", dir / "network.txt"));
  const bool disc = need(net_kv, "disc_head", dir / "network.txt") == "1";
  ckpt.net = DenoiserNetwork(ckpt.config.model, role, 0);
  if (disc && !ckpt.net->has_disc_head()) ckpt.net->attach_disc_head(0);
  {
    torch::serialize::InputArchive archive;
    try {
      archive.load_from((dir / "params.pt").string());
      ckpt.net->load(archive);
    } catch (const c10::Error& e) {
      fail(ErrorKind::kData, "cannot read params from " + dir.string() + ": " +
                                 e.what_without_backtrace());
    }
  }
  ckpt.net->eval();
  if (tensor_sha256(ckpt.net->embedding()) != need(net_kv, "embedding_sha256", dir / "network.txt")) {
    fail(ErrorKind::kData, "embedding hash mismatch in " + dir.string());
  }

  ckpt.vocab = Vocabulary::load(dir / "vocab.txt");
  if (ckpt.vocab.size() != ckpt.config.model.vocab_size) {
    fail(ErrorKind::kData, "vocabulary size disagrees with model config in " + dir.string());
  }
  {
    auto in = open_in(dir / "step.txt");
    in >> ckpt.step;
  }
  {
    auto in = open_in(dir / "history.txt");
    for (std::string line; std::getline(in, line);) {
      ValidationRecord r;
      if (std::sscanf(line.c_str(), "step=%ld bleu=%lf", &r.step, &r.bleu) == 2) {
        ckpt.history.push_back(r);
      }
    }
  }
  return ckpt;
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                    const std::map<std::string, std::string>& extra) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  auto out = open_out(dir / "manifest.txt");
  out << "command=" << command << "\n"
      << "config_hash=" << config_hash(cfg) << "\n"
      << "code_version=" << code_version() << "\n"
      << "data_seed=" << cfg.data.seed << "\n"
      << "teacher_seed=" << cfg.teacher.seed << "\n"
      << "distill_seed=" << cfg.distill.seed << "\n"
      << "generate_seed=" << cfg.generate.seed << "\n"
      << "device=" << compute_device().str() << "\n";
  for (const auto& [k, v] : extra) out << k << "=" << v << "\n";
  save_config(cfg, dir / "manifest_config.ini");
}

}  // namespace dlmone
