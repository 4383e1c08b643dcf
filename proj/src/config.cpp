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

#include "dlmone/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "dlmone/common.hpp"

namespace dlmone {

namespace {

struct Field {
  std::string section;
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  fail(ErrorKind::kConfig, "config key '" + key + "': cannot parse '" + value + "' as " + want);
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v, "a number");
    return out;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a number");
  }
}

std::string fmt_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

std::string fmt_list(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<int> parse_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(parse_int<int>(key, item));
  if (out.empty()) bad_value(key, v, "a comma-separated integer list");
  return out;
}

template <typename Int>
Field int_field(std::string sec, std::string key, Int& ref) {
  auto name = sec + "." + key;
  return {sec, key, [&ref] { return std::to_string(ref); },
          [&ref, name](const std::string& v) { ref = parse_int<Int>(name, v); }};
}

Field double_field(std::string sec, std::string key, double& ref) {
  auto name = sec + "." + key;
  return {sec, key, [&ref] { return fmt_double(ref); },
          [&ref, name](const std::string& v) { ref = parse_double(name, v); }};
}

Field string_field(std::string sec, std::string key, std::string& ref) {
  return {sec, key, [&ref] { return ref; }, [&ref](const std::string& v) { ref = v; }};
}

template <typename Enum, typename Parse>
Field enum_field(std::string sec, std::string key, Enum& ref, Parse parse) {
  return {sec, key, [&ref] { return std::string(to_string(ref)); },
          [&ref, parse](const std::string& v) { ref = parse(v); }};
}

std::vector<Field> fields(RunConfig& c) {
  std::vector<Field> f;
  auto& m = c.model;
  f.push_back(int_field("model", "vocab_size", m.vocab_size));
  f.push_back(int_field("model", "seq_len", m.seq_len));
  f.push_back(int_field("model", "embed_dim", m.embed_dim));
  f.push_back(int_field("model", "hidden", m.hidden));
  f.push_back(int_field("model", "layers", m.layers));
  f.push_back(int_field("model", "heads", m.heads));
  f.push_back(int_field("model", "ffn_mult", m.ffn_mult));

  auto& s = c.schedule;
  f.push_back(int_field("schedule", "T", s.steps));
  f.push_back(enum_field("schedule", "kind", s.kind, parse_schedule_kind));
  f.push_back(double_field("schedule", "s_offset", s.s_offset));

  auto& d = c.data;
  f.push_back(enum_field("data", "task", d.task, parse_task_kind));
  f.push_back(int_field("data", "vocab_size", d.vocab_size));
  f.push_back(int_field("data", "n_train", d.n_train));
  f.push_back(int_field("data", "n_valid", d.n_valid));
  f.push_back(int_field("data", "n_test", d.n_test));
  f.push_back(int_field("data", "min_len", d.min_len));
  f.push_back(int_field("data", "max_len", d.max_len));
  f.push_back(int_field("data", "seed", d.seed));
  f.push_back(string_field("data", "train_file", d.train_file));
  f.push_back(string_field("data", "valid_file", d.valid_file));
  f.push_back(string_field("data", "test_file", d.test_file));

  auto& t = c.teacher;
  f.push_back(int_field("teacher", "steps", t.steps));
  f.push_back(int_field("teacher", "batch_size", t.batch_size));
  f.push_back(double_field("teacher", "lr", t.lr));
  f.push_back(double_field("teacher", "beta1", t.beta1));
  f.push_back(double_field("teacher", "beta2", t.beta2));
  f.push_back(double_field("teacher", "weight_decay", t.weight_decay));
  f.push_back(int_field("teacher", "warmup_steps", t.warmup_steps));
  f.push_back(double_field("teacher", "final_lr_fraction", t.final_lr_fraction));
  f.push_back(double_field("teacher", "ce_weight", t.ce_weight));
  f.push_back(double_field("teacher", "grad_clip", t.grad_clip));
  f.push_back(int_field("teacher", "log_every", t.log_every));
  f.push_back(int_field("teacher", "seed", t.seed));

  auto& x = c.distill;
  f.push_back(double_field("distill", "mu", x.mu));
  f.push_back(int_field("distill", "t_min", x.t_min));
  f.push_back(int_field("distill", "t_max", x.t_max));
  f.push_back(int_field("distill", "t_init", x.t_init));
  f.push_back(double_field("distill", "a_sg_dsm", x.a_sg_dsm));
  f.push_back(double_field("distill", "b_sg_adv", x.b_sg_adv));
  f.push_back(double_field("distill", "a_g_sd", x.a_g_sd));
  f.push_back(double_field("distill", "b_g_adv", x.b_g_adv));
  f.push_back(double_field("distill", "lr_psi", x.lr_psi));
  f.push_back(double_field("distill", "lr_theta", x.lr_theta));
  f.push_back(double_field("distill", "beta1", x.beta1));
  f.push_back(double_field("distill", "beta2", x.beta2));
  f.push_back(double_field("distill", "weight_decay", x.weight_decay));
  f.push_back(int_field("distill", "stage", x.stage));
  f.push_back(int_field("distill", "budget_steps", x.budget_steps));
  f.push_back(int_field("distill", "val_every", x.val_every));
  f.push_back(int_field("distill", "batch_size", x.batch_size));
  f.push_back(int_field("distill", "val_size", x.val_size));
  f.push_back(enum_field("distill", "weight_mode", x.weight_mode, parse_weight_mode));
  f.push_back(enum_field("distill", "gamma_mode", x.gamma_mode, parse_gamma_mode));
  f.push_back(enum_field("distill", "disc_time", x.disc_time, parse_disc_time_mode));
  f.push_back(double_field("distill", "ema_decay", x.ema_decay));
  f.push_back(int_field("distill", "seed", x.seed));
  f.push_back(int_field("distill", "val_seed", x.val_seed));

  auto& g = c.generate;
  f.push_back(int_field("generate", "steps", g.steps));
  f.push_back(int_field("generate", "mbr", g.mbr));
  f.push_back(enum_field("generate", "teacher_mode", g.teacher_mode, parse_sampler_mode));
  f.push_back(int_field("generate", "seed", g.seed));
  f.push_back(int_field("generate", "batch_size", g.batch_size));

  auto& b = c.bench;
  f.push_back({"bench", "steps_list", [&b] { return fmt_list(b.steps_list); },
               [&b](const std::string& v) { b.steps_list = parse_list("bench.steps_list", v); }});
  f.push_back(int_field("bench", "repeats", b.repeats));
  f.push_back(int_field("bench", "batch", b.batch));
  return f;
}

void finalize(RunConfig& c) {
  c.model.time_steps = c.schedule.steps;
  if (c.model.vocab_size <= Vocabulary::kNumSpecials) {
    fail(ErrorKind::kConfig, "model.vocab_size must exceed the special-token count");
  }
  if (c.model.hidden % c.model.heads != 0) {
    fail(ErrorKind::kConfig, "model.hidden must be divisible by model.heads");
  }
}

void set_field(std::vector<Field>& fs, const std::string& sec, const std::string& key,
               const std::string& value) {
  for (auto& f : fs) {
    if (f.section == sec && f.key == key) {
      f.set(value);
      return;
    }
  }
  fail(ErrorKind::kConfig, "unknown config key '" + sec + "." + key + "'");
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::kConfig, std::string("malformed config: ") + e.what());
  }
  RunConfig cfg;
  auto fs = fields(cfg);
  for (const auto& [sec, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      fail(ErrorKind::kConfig, "config key '" + sec + "' must be inside a [section]");
    }
    for (const auto& [key, value] : body) set_field(fs, sec, key, value.data());
  }
  finalize(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kConfig, "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const RunConfig& cfg) {
  RunConfig copy = cfg;
  auto fs = fields(copy);
  std::ostringstream os;
  std::string current;
  for (const auto& f : fs) {
    if (f.section != current) {
      if (!current.empty()) os << "\n";
      os << "[" << f.section << "]\n";
      current = f.section;
    }
    os << f.key << " = " << f.get() << "\n";
  }
  return os.str();
}

void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << format_config(cfg);
}

std::string config_hash(const RunConfig& cfg) { return sha256_hex(format_config(cfg)); }

RunConfig apply_overrides(const RunConfig& cfg, const std::vector<std::string>& overrides) {
  RunConfig out = cfg;
  auto fs = fields(out);
  for (const auto& o : overrides) {
    auto eq = o.find('=');
    auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      fail(ErrorKind::kConfig, "override '" + o + "' is not section.key=value");
    }
    set_field(fs, o.substr(0, dot), o.substr(dot + 1, eq - dot - 1), o.substr(eq + 1));
  }
  finalize(out);
  return out;
}

}  // namespace dlmone
