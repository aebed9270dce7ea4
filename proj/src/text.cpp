#include "prx/text.hpp"

#include <cctype>

namespace prx::text {

bool is_detachable_punct(char c) {
  switch (c) {
    case '.': case ',': case ';': case ':': case '!': case '?':
    case '(': case ')': case '[': case ']': case '{': case '}':
    case '"': case '\'': case '`':
      return true;
    default:
      return false;
  }
}

std::size_t whitespace_length(std::string_view s, std::size_t pos) {
  const auto b = [&](std::size_t i) { return static_cast<unsigned char>(s[i]); };
  const unsigned char c = b(pos);
  if (c == ' ' || c == '\t' || c == '\n' || c == '\v' || c == '\f' || c == '\r') return 1;
  const std::size_t left = s.size() - pos;
  if (c == 0xC2 && left >= 2 && (b(pos + 1) == 0x85 || b(pos + 1) == 0xA0)) return 2;
  if (c == 0xE1 && left >= 3 && b(pos + 1) == 0x9A && b(pos + 2) == 0x80) return 3;
  if (c == 0xE2 && left >= 3) {
    const unsigned char c1 = b(pos + 1), c2 = b(pos + 2);
    if (c1 == 0x80 && ((c2 >= 0x80 && c2 <= 0x8A) || c2 == 0xA8 || c2 == 0xA9 || c2 == 0xAF)) {
      return 3;
    }
    if (c1 == 0x81 && c2 == 0x9F) return 3;
  }
  if (c == 0xE3 && left >= 3 && b(pos + 1) == 0x80 && b(pos + 2) == 0x80) return 3;
  return 0;
}

namespace {

bool is_line_break(std::string_view s, std::size_t pos, std::size_t ws) {
  if (ws == 1) return s[pos] == '\n' || s[pos] == '\r' || s[pos] == '\v' || s[pos] == '\f';
  if (ws == 2) return static_cast<unsigned char>(s[pos + 1]) == 0x85;
  return static_cast<unsigned char>(s[pos]) == 0xE2 && static_cast<unsigned char>(s[pos + 1]) == 0x80 &&
         (static_cast<unsigned char>(s[pos + 2]) == 0xA8 ||
          static_cast<unsigned char>(s[pos + 2]) == 0xA9);
}

}  // namespace

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t pos = 0;
  bool newline = false;
  while (pos < s.size()) {
    if (std::size_t ws = whitespace_length(s, pos); ws > 0) {
      if (is_line_break(s, pos, ws)) newline = true;
      pos += ws;
      continue;
    }
    std::size_t end = pos;
    while (end < s.size() && whitespace_length(s, end) == 0) ++end;
    std::size_t lo = pos, hi = end;
    while (lo < hi && is_detachable_punct(s[lo])) {
      out.push_back({lo, lo + 1, true, newline});
      newline = false;
      ++lo;
    }
    std::size_t trail = hi;
    while (trail > lo && is_detachable_punct(s[trail - 1])) --trail;
    if (lo < trail) {
      out.push_back({lo, trail, false, newline});
      newline = false;
    }
    for (std::size_t i = trail; i < hi; ++i) {
      out.push_back({i, i + 1, true, newline});
      newline = false;
    }
    pos = end;
  }
  return out;
}

std::size_t count_tokens(std::string_view s) { return tokenize(s).size(); }

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string to_upper_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t lo = 0, hi = s.size();
  while (lo < hi && std::isspace(static_cast<unsigned char>(s[lo]))) ++lo;
  while (hi > lo && std::isspace(static_cast<unsigned char>(s[hi - 1]))) --hi;
  return std::string(s.substr(lo, hi - lo));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t p = s.find(sep, start);
    out.emplace_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

}  // namespace prx::text
