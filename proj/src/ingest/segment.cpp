#include <algorithm>
#include <cctype>

#include "prx/ingest.hpp"
#include "prx/text.hpp"

namespace prx::ingest {

namespace {

struct HeaderHit {
  std::size_t start;    // header start (line start)
  std::size_t content;  // first byte after the header and its colon
  SectionLabel label;
  std::string header;
};

bool is_blank(char c) { return c == ' ' || c == '\t'; }

// Matches a lexicon phrase at `pos`, case-insensitively, followed by optional
// blanks and then a colon or the end of the line.
std::optional<HeaderHit> match_header(std::string_view raw, std::size_t line_start,
                                      std::size_t line_end,
                                      const std::vector<HeaderEntry>& lexicon) {
  std::size_t pos = line_start;
  while (pos < line_end && is_blank(raw[pos])) ++pos;
  for (const auto& h : lexicon) {
    if (h.phrase.empty() || pos + h.phrase.size() > line_end) continue;
    bool same = true;
    for (std::size_t i = 0; i < h.phrase.size() && same; ++i) {
      same = std::tolower(static_cast<unsigned char>(raw[pos + i])) ==
             static_cast<unsigned char>(h.phrase[i]);
    }
    if (!same) continue;
    std::size_t after = pos + h.phrase.size();
    std::size_t q = after;
    while (q < line_end && is_blank(raw[q])) ++q;
    if (q < line_end && raw[q] == ':') {
      return HeaderHit{line_start, q + 1, h.label, std::string(raw.substr(pos, h.phrase.size()))};
    }
    std::size_t eol = q;
    while (eol < line_end && (raw[eol] == '\r')) ++eol;
    if (eol == line_end) {
      return HeaderHit{line_start, line_end, h.label, std::string(raw.substr(pos, h.phrase.size()))};
    }
  }
  return std::nullopt;
}

}  // namespace

std::vector<NoteSection> segment_note(std::string_view raw, const std::vector<HeaderEntry>& lexicon) {
  std::vector<HeaderHit> hits;
  std::size_t line_start = 0;
  while (line_start < raw.size()) {
    std::size_t nl = raw.find('\n', line_start);
    std::size_t line_end = nl == std::string_view::npos ? raw.size() : nl;
    if (auto hit = match_header(raw, line_start, line_end, lexicon)) hits.push_back(*hit);
    if (nl == std::string_view::npos) break;
    line_start = nl + 1;
  }

  std::vector<NoteSection> out;
  const std::size_t first = hits.empty() ? raw.size() : hits.front().start;
  if (first > 0) {
    std::string pre = text::trim(raw.substr(0, first));
    if (!pre.empty()) out.push_back({SectionLabel::other, "preamble", pre, 0, first});
  }
  for (std::size_t i = 0; i < hits.size(); ++i) {
    const std::size_t end = i + 1 < hits.size() ? hits[i + 1].start : raw.size();
    const auto& h = hits[i];
    NoteSection s;
    s.label = h.label;
    s.header = h.header;
    s.start = h.start;
    s.end = end;
    s.text = text::trim(raw.substr(h.content, end > h.content ? end - h.content : 0));
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

bool is_word_boundary(char c) {
  return text::is_detachable_punct(c) || std::isspace(static_cast<unsigned char>(c));
}

}  // namespace

AbbreviationDictionary::AbbreviationDictionary(std::map<std::string, std::string> entries)
    : entries_(std::move(entries)) {
  for (auto& [k, v] : entries_) {
    if (k.empty()) throw Error(ErrorCode::InvalidArgument, "empty abbreviation");
    longest_ = std::max(longest_, k.size());
  }
  for (auto& [k, v] : entries_) {
    if (expand(v) != v) {
      throw Error(ErrorCode::InvalidArgument,
                  "abbreviation expansion for '" + k + "' contains another abbreviation");
    }
  }
}

std::string AbbreviationDictionary::expand(std::string_view text) const {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const bool at_start = pos == 0 || is_word_boundary(text[pos - 1]);
    if (at_start && !is_word_boundary(text[pos])) {
      std::size_t max_len = std::min(longest_, text.size() - pos);
      bool replaced = false;
      for (std::size_t len = max_len; len > 0; --len) {
        const std::size_t end = pos + len;
        if (end < text.size() && !is_word_boundary(text[end])) continue;
        auto it = entries_.find(std::string(text.substr(pos, len)));
        if (it == entries_.end()) continue;
        out += it->second;
        pos = end;
        replaced = true;
        break;
      }
      if (replaced) continue;
    }
    out.push_back(text[pos++]);
  }
  return out;
}

std::string expand_abbreviations(std::string_view text, const AbbreviationDictionary& dictionary) {
  return dictionary.expand(text);
}

}  // namespace prx::ingest
