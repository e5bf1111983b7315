#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace synthdial::text {

inline bool is_alnum(char c) noexcept {
  const auto u = static_cast<unsigned char>(c);
  return (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') ||
         (u >= 'A' && u <= 'Z');
}

inline bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

inline char to_lower(char c) noexcept {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

std::string lower(std::string_view s);
std::string_view trim(std::string_view s) noexcept;
bool is_blank(std::string_view s) noexcept;

// Collapses whitespace runs to one space and trims the ends.
std::string collapse_whitespace(std::string_view s);

// Splits on '\n'; a trailing '\r' is stripped from each line.
std::vector<std::string_view> split_lines(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool starts_with_icase(std::string_view s, std::string_view prefix) noexcept;

// Classic two-row edit distance over bytes (unit costs).
std::size_t levenshtein(std::string_view a, std::string_view b);

}  // namespace synthdial::text
