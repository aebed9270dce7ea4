#include <array>
#include <cctype>
#include <cstdio>

#include "prx/hashing.hpp"
#include "prx/ingest.hpp"
#include "prx/text.hpp"

namespace prx::ingest {

std::string pseudonym(std::string_view kind, std::string_view surface, const DeidConfig& cfg) {
  std::string msg(kind);
  msg += ':';
  msg += surface;
  return "[" + std::string(kind) + "_" + hashing::hmac_sha256_hex(cfg.secret_key, msg).substr(0, 4) +
         "]";
}

std::int64_t date_shift_days(std::string_view record_id, const DeidConfig& cfg) {
  const auto mac = hashing::hmac_sha256(cfg.secret_key, "DATESHIFT:" + std::string(record_id));
  std::uint64_t h = 0;
  for (int i = 0; i < 8; ++i) h = (h << 8) | mac[static_cast<std::size_t>(i)];
  const std::int64_t range = cfg.date_shift_range_days;
  return static_cast<std::int64_t>(h % static_cast<std::uint64_t>(2 * range + 1)) - range;
}

namespace {

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::size_t digit_run(std::string_view s, std::size_t pos) {
  std::size_t n = 0;
  while (pos + n < s.size() && is_digit(s[pos + n])) ++n;
  return n;
}

int to_int(std::string_view s) {
  int v = 0;
  for (char c : s) v = v * 10 + (c - '0');
  return v;
}

// Capitalized word: uppercase letter followed by lowercase letters.
std::size_t capitalized_word(std::string_view s, std::size_t pos) {
  if (pos >= s.size() || !std::isupper(static_cast<unsigned char>(s[pos]))) return 0;
  std::size_t n = 1;
  while (pos + n < s.size() && std::islower(static_cast<unsigned char>(s[pos + n]))) ++n;
  if (n < 2 || (pos + n < s.size() && is_alnum(s[pos + n]))) return 0;
  return n;
}

constexpr std::array<std::string_view, 6> kTitles = {"Mrs", "Miss", "Mr", "Ms", "Dr", "Mx"};

struct Scanner {
  std::string_view in;
  const DeidConfig& cfg;
  std::int64_t shift;
  const Resources& res;
  std::string out;

  // MRN[:#]? blanks 5-10 digits
  bool try_mrn(std::size_t& pos) {
    if (pos + 3 > in.size()) return false;
    if (text::to_upper_ascii(in.substr(pos, 3)) != "MRN") return false;
    std::size_t q = pos + 3;
    if (q < in.size() && (in[q] == ':' || in[q] == '#')) ++q;
    while (q < in.size() && (in[q] == ' ' || in[q] == '\t')) ++q;
    const std::size_t n = digit_run(in, q);
    if (n < 5 || n > 10 || (q + n < in.size() && is_alnum(in[q + n]))) return false;
    out.append(in.substr(pos, q - pos));
    out += pseudonym("MRN", in.substr(q, n), cfg);
    pos = q + n;
    return true;
  }

  // YYYY-MM-DD or MM/DD/YYYY, re-rendered in the same layout after shifting.
  bool try_date(std::size_t& pos) {
    const std::size_t n = digit_run(in, pos);
    int y = 0, m = 0, d = 0;
    std::size_t end = 0;
    bool iso = false;
    if (n == 4 && pos + 10 <= in.size() && in[pos + 4] == '-' && digit_run(in, pos + 5) == 2 &&
        in[pos + 7] == '-' && digit_run(in, pos + 8) == 2) {
      y = to_int(in.substr(pos, 4));
      m = to_int(in.substr(pos + 5, 2));
      d = to_int(in.substr(pos + 8, 2));
      end = pos + 10;
      iso = true;
    } else if ((n == 1 || n == 2) && pos + n < in.size() && in[pos + n] == '/') {
      const std::size_t p2 = pos + n + 1;
      const std::size_t n2 = digit_run(in, p2);
      if ((n2 != 1 && n2 != 2) || p2 + n2 >= in.size() || in[p2 + n2] != '/') return false;
      const std::size_t p3 = p2 + n2 + 1;
      if (digit_run(in, p3) != 4) return false;
      m = to_int(in.substr(pos, n));
      d = to_int(in.substr(p2, n2));
      y = to_int(in.substr(p3, 4));
      end = p3 + 4;
    } else {
      return false;
    }
    if (end < in.size() && is_alnum(in[end])) return false;
    if (m < 1 || m > 12 || d < 1 || d > 31) return false;
    Timestamp t;
    try {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
      t = Timestamp::parse(buf).plus_days(shift);
    } catch (const Error&) {
      return false;
    }
    const std::string iso_s = t.to_iso();
    if (iso) {
      out += iso_s.substr(0, 10);
    } else {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%02d/%02d/%s", to_int(iso_s.substr(5, 2)),
                    to_int(iso_s.substr(8, 2)), iso_s.substr(0, 4).c_str());
      out += buf;
    }
    pos = end;
    return true;
  }

  bool try_location(std::size_t& pos) {
    for (const auto& loc : res.deid_locations()) {
      if (loc.empty() || in.compare(pos, loc.size(), loc) != 0) continue;
      const std::size_t end = pos + loc.size();
      if (end < in.size() && is_alnum(in[end])) continue;
      out += pseudonym("LOC", loc, cfg);
      pos = end;
      return true;
    }
    return false;
  }

  bool try_title(std::size_t& pos) {
    for (auto title : kTitles) {
      if (in.compare(pos, title.size(), title) != 0) continue;
      std::size_t q = pos + title.size();
      if (q < in.size() && is_alpha(in[q])) continue;
      if (q < in.size() && in[q] == '.') ++q;
      const std::size_t gap = q;
      while (q < in.size() && in[q] == ' ') ++q;
      if (q == gap) continue;
      std::size_t n = capitalized_word(in, q);
      if (n == 0) continue;
      std::size_t name_end = q + n;
      if (name_end + 1 < in.size() && in[name_end] == ' ') {
        if (std::size_t n2 = capitalized_word(in, name_end + 1); n2 > 0) name_end += 1 + n2;
      }
      out.append(in.substr(pos, q - pos));
      out += pseudonym("NAME", in.substr(q, name_end - q), cfg);
      pos = name_end;
      return true;
    }
    return false;
  }

  bool try_name(std::size_t& pos) {
    const std::size_t n = capitalized_word(in, pos);
    if (n == 0) return false;
    const std::string word(in.substr(pos, n));
    if (!res.deid_names().count(word)) return false;
    out += pseudonym("NAME", word, cfg);
    pos += n;
    return true;
  }

  std::string run() {
    out.reserve(in.size());
    std::size_t pos = 0;
    while (pos < in.size()) {
      const bool word_start = pos == 0 || !is_alnum(in[pos - 1]);
      if (word_start) {
        if (is_digit(in[pos]) && try_date(pos)) continue;
        if (is_alpha(in[pos]) &&
            (try_mrn(pos) || try_location(pos) || try_title(pos) || try_name(pos))) {
          continue;
        }
      }
      out.push_back(in[pos++]);
    }
    return std::move(out);
  }
};

}  // namespace

std::string deidentify_text(std::string_view text, const DeidConfig& cfg, std::int64_t shift_days,
                            const Resources& resources) {
  return Scanner{text, cfg, shift_days, resources, {}}.run();
}

PatientRecord deidentify(PatientRecord r, const DeidConfig& cfg, const Resources& res) {
  if (r.deidentified) return r;
  const std::int64_t shift = date_shift_days(r.record_id, cfg);
  r.encounter_time = r.encounter_time.plus_days(shift);
  for (auto& e : r.vitals) e.timestamp = e.timestamp.plus_days(shift);
  for (auto& e : r.labs) e.timestamp = e.timestamp.plus_days(shift);
  for (auto& m : r.medications) m.timestamp = m.timestamp.plus_days(shift);
  for (auto& n : r.notes) {
    n.timestamp = n.timestamp.plus_days(shift);
    n.note_id = "N" + hashing::hmac_sha256_hex(cfg.secret_key, "NOTE:" + n.note_id).substr(0, 12);
    const bool had_sections = !n.sections.empty();
    n.raw_text = deidentify_text(n.raw_text, cfg, shift, res);
    if (had_sections) n.sections = segment_note(n.raw_text, res.headers());
  }
  r.record_id = "R" + hashing::hmac_sha256_hex(cfg.secret_key, "ID:" + r.record_id).substr(0, 16);
  r.deidentified = true;
  return r;
}

}  // namespace prx::ingest
