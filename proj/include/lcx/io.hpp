// SPDX-License-Identifier: Apache-2.0
//
// Curve files and run configs.
//
// Curve file: a `#key=value` preamble, an optional `task_id,run_id,step,value`
// header, then one row per observation. Rows of a run are contiguous and its
// steps run 1, 2, 3, ... Recognized preamble keys:
//   minimize, l_hard, u_hard, l_soft, u_soft   normalization ("inf"/"-inf" allowed)
//   u_soft=y0                                  each run's first value is its u_soft
//   space=normalized                           values are already curve-space [0,1]
// Anything else is carried through untouched.
#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lcx/eval.hpp"

namespace lcx::io {

struct CurveFile {
  std::vector<std::pair<std::string, std::string>> meta;  // preamble, file order
  std::vector<eval::LearningCurve> curves;                 // file order of first appearance
};

/// Preamble entries describing `spec`.
std::vector<std::pair<std::string, std::string>> spec_meta(const NormalizationSpec& spec);

CurveFile parse_curve_file(std::string_view text, const std::string& origin = "<curves>");
CurveFile read_curve_file(const std::string& path);
std::string format_curve_file(const CurveFile& file);
void write_curve_file(const CurveFile& file, const std::string& path);

/// Reads a whole file; throws an io Error.
std::string read_text(const std::string& path);
/// Writes atomically enough for our purposes: truncate, write, check.
void write_text(const std::string& path, std::string_view text);

/// Flat `key = value` config. '#' starts a comment line. Unknown or repeated
/// keys are config errors.
class RunConfig {
 public:
  static RunConfig parse(std::string_view text, const std::string& origin = "<config>");
  static RunConfig load(const std::string& path);
  static const std::vector<std::string>& known_keys();

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace lcx::io
