#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace seqgrad {

/// Shortest round-trip decimal form; locale independent.
std::string format_double(double v);
/// Fixed-precision decimal form; locale independent.
std::string format_fixed(double v, int precision);

/// Whole-string parses; throw std::invalid_argument on trailing garbage.
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::vector<std::string_view> split_ws(std::string_view line);
std::vector<std::string_view> split_char(std::string_view line, char sep);
std::string_view trim(std::string_view s);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace seqgrad
