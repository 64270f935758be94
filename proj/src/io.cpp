// SPDX-License-Identifier: Apache-2.0
#include "lcx/io.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <unordered_map>

#include "lcx/error.hpp"
#include "lcx/text.hpp"

namespace lcx::io {

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw_io("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  if (is.bad()) throw_io("failed reading '" + path + "'");
  return ss.str();
}

void write_text(const std::string& path, std::string_view text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw_io("cannot open '" + path + "' for writing");
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw_io("failed writing '" + path + "'");
}

std::vector<std::pair<std::string, std::string>> spec_meta(const NormalizationSpec& spec) {
  return {{"minimize", spec.minimize ? "true" : "false"},
          {"l_hard", format_double(spec.l_hard)},
          {"u_hard", format_double(spec.u_hard)},
          {"l_soft", format_double(spec.l_soft)},
          {"u_soft", format_double(spec.u_soft)}};
}

namespace {

struct SpecTemplate {
  NormalizationSpec spec;
  bool u_soft_from_y0 = false;
  bool prenormalized = false;
};

SpecTemplate interpret_meta(const std::vector<std::pair<std::string, std::string>>& meta, const std::string& origin) {
  SpecTemplate t;
  for (const auto& [k, v] : meta) {
    try {
      if (k == "minimize") t.spec.minimize = parse_bool(v);
      else if (k == "l_hard") t.spec.l_hard = parse_double(v);
      else if (k == "u_hard") t.spec.u_hard = parse_double(v);
      else if (k == "l_soft") t.spec.l_soft = parse_double(v);
      else if (k == "u_soft" && v == "y0") t.u_soft_from_y0 = true;
      else if (k == "u_soft") t.spec.u_soft = parse_double(v);
      else if (k == "space") {
        if (v != "normalized" && v != "raw") throw_config("space must be raw or normalized");
        t.prenormalized = v == "normalized";
      }
    } catch (const Error& e) {
      throw_config(origin + ": preamble key '" + k + "': " + e.what());
    }
  }
  return t;
}

}  // namespace

CurveFile parse_curve_file(std::string_view text, const std::string& origin) {
  CurveFile file;
  std::unordered_map<std::string, size_t> index;  // curve id -> position
  std::optional<size_t> current;
  bool body = false;
  size_t lineno = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++lineno;
    const std::string_view line = trim(raw);
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (body) throw_config(where + ": preamble lines must precede the data");
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) continue;  // plain comment
      std::string key(trim(line.substr(1, eq - 1)));
      std::string value(trim(line.substr(eq + 1)));
      if (key.empty()) throw_config(where + ": empty preamble key");
      for (const auto& kv : file.meta)
        if (kv.first == key) throw_config(where + ": repeated preamble key '" + key + "'");
      file.meta.emplace_back(std::move(key), std::move(value));
      continue;
    }
    const auto cols = split(line, ',');
    if (cols.size() != 4) throw_config(where + ": expected task_id,run_id,step,value");
    if (!body && cols[0] == "task_id") {
      body = true;
      continue;
    }
    body = true;
    const std::string task(trim(cols[0])), run(trim(cols[1]));
    if (task.empty() || run.empty()) throw_config(where + ": empty task or run id");
    long long step;
    double value;
    try {
      step = parse_int(cols[2]);
      value = parse_double(cols[3]);
    } catch (const Error& e) {
      throw_config(where + ": " + e.what());
    }
    const std::string id = task + "/" + run;
    auto it = index.find(id);
    if (it == index.end()) {
      index.emplace(id, file.curves.size());
      file.curves.push_back(eval::LearningCurve{task, run, {}, {}, false});
      current = file.curves.size() - 1;
    } else if (!current || *current != it->second) {
      throw_config(where + ": rows of run " + id + " are not contiguous");
    }
    auto& curve = file.curves[*current];
    if (step != static_cast<long long>(curve.values.size()) + 1)
      throw_config(where + ": run " + id + " expected step " + std::to_string(curve.values.size() + 1) + ", got " +
                   std::to_string(step));
    curve.values.push_back(value);
  }

  const SpecTemplate t = interpret_meta(file.meta, origin);
  for (auto& c : file.curves) {
    c.prenormalized = t.prenormalized;
    c.spec = t.spec;
    if (t.u_soft_from_y0) c.spec.u_soft = c.values.front();
    try {
      c.validate();
    } catch (const Error& e) {
      throw_config(origin + ": " + e.what());
    }
  }
  return file;
}

CurveFile read_curve_file(const std::string& path) { return parse_curve_file(read_text(path), path); }

std::string format_curve_file(const CurveFile& file) {
  std::ostringstream os;
  for (const auto& [k, v] : file.meta) os << '#' << k << '=' << v << '\n';
  os << "task_id,run_id,step,value\n";
  for (const auto& c : file.curves)
    for (size_t i = 0; i < c.values.size(); ++i)
      os << c.task_id << ',' << c.run_id << ',' << i + 1 << ',' << format_double(c.values[i]) << '\n';
  return os.str();
}

void write_curve_file(const CurveFile& file, const std::string& path) { write_text(path, format_curve_file(file)); }

// ---------------------------------------------------------------------------

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = {
      // model
      "nlayers", "emsize", "nheads", "nhidden", "nbins", "m",
      // training
      "nb_data", "batch_size", "lr", "warmup_fraction", "materialize", "bins", "bin_draws", "bin_seed",
      // chain
      "nwalkers", "nsamples", "burn_in", "thin", "stretch_scale", "init",
      // early stopping
      "policy", "confidence", "schedule", "k", "min_cutoff", "budget", "orderings",
      // evaluation
      "methods", "cutoffs",
      // shared
      "seed", "threads", "checkpoint"};
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& keys = known_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw_config("unknown config key '" + key + "'");
  values_[key] = value;
}

RunConfig RunConfig::parse(std::string_view text, const std::string& origin) {
  RunConfig cfg;
  size_t lineno = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++lineno;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw_config(where + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    if (cfg.has(key)) throw_config(where + ": repeated key '" + key + "'");
    try {
      cfg.set(key, std::string(trim(line.substr(eq + 1))));
    } catch (const Error& e) {
      throw_config(where + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) { return parse(read_text(path), path); }

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return parse_double(it->second);
  } catch (const Error& e) {
    throw_config("config key '" + key + "': " + e.what());
  }
}

long long RunConfig::get_int(const std::string& key, long long fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return parse_int(it->second);
  } catch (const Error& e) {
    throw_config("config key '" + key + "': " + e.what());
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return parse_bool(it->second);
  } catch (const Error& e) {
    throw_config("config key '" + key + "': " + e.what());
  }
}

}  // namespace lcx::io
