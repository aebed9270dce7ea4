#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

// Canonical tokenizer: split on Unicode whitespace, then detach leading and
// trailing ASCII punctuation from each word as standalone tokens. All token
// counts in the library (chunk sizes, prompt budgets) use this tokenizer.
namespace prx::text {

struct Token {
  std::size_t start = 0;  // byte offsets into the source text
  std::size_t end = 0;
  bool punctuation = false;
  bool newline_before = false;  // whitespace preceding the token had a line break
};

std::vector<Token> tokenize(std::string_view text);
std::size_t count_tokens(std::string_view text);

bool is_detachable_punct(char c);
// Length in bytes of the whitespace code point at `pos`, or 0.
std::size_t whitespace_length(std::string_view text, std::size_t pos);

std::string to_lower_ascii(std::string_view s);
std::string to_upper_ascii(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

}  // namespace prx::text
