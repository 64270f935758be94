// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lcx {

/// Shortest decimal form that parses back to the same double; "inf" / "-inf"
/// for infinities.
std::string format_double(double v);

/// Accepts everything format_double emits. Throws a config Error otherwise.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);
bool parse_bool(std::string_view text);

std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

}  // namespace lcx
