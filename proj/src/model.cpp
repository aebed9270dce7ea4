#include "prx/model.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>

#include "prx/errors.hpp"

namespace prx {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::ValidationFailed: return "ValidationFailed";
    case ErrorCode::MalformedCode: return "MalformedCode";
    case ErrorCode::UnparseableTimestamp: return "UnparseableTimestamp";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyCase: return "EmptyCase";
    case ErrorCode::EmbedServiceError: return "EmbedServiceError";
    case ErrorCode::BudgetTooSmall: return "BudgetTooSmall";
    case ErrorCode::GeneratorServiceError: return "GeneratorServiceError";
    case ErrorCode::GeneratorParseError: return "GeneratorParseError";
    case ErrorCode::EmptyPrecedent: return "EmptyPrecedent";
    case ErrorCode::MixedTasks: return "MixedTasks";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::MissingRetrieval: return "MissingRetrieval";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date (H. Hinnant).
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct Civil {
  std::int64_t y;
  unsigned m, d;
};

Civil civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

bool is_leap(std::int64_t y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

unsigned days_in_month(std::int64_t y, unsigned m) {
  static constexpr std::array<unsigned, 12> kDays{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && is_leap(y) ? 29 : kDays[m - 1];
}

bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
  }
  auto r = std::from_chars(s.data() + pos, s.data() + pos + len, out);
  return r.ec == std::errc{};
}

[[noreturn]] void bad_timestamp(std::string_view iso) {
  throw Error(ErrorCode::UnparseableTimestamp,
              "unparseable ISO-8601 UTC timestamp: '" + std::string(iso) + "'");
}

}  // namespace

Timestamp Timestamp::from_civil(int year, unsigned month, unsigned day, int hour, int minute,
                                int second) {
  return {days_from_civil(year, month, day) * kSecondsPerDay + hour * 3600 + minute * 60 + second};
}

// Accepts YYYY-MM-DD, YYYY-MM-DDTHH:MM[:SS[.fff]] followed by Z or +00:00.
// A bare date means midnight UTC; a time without an offset is rejected.
Timestamp Timestamp::parse(std::string_view iso) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  if (!read_int(iso, 0, 4, y) || iso.size() < 10 || iso[4] != '-' || !read_int(iso, 5, 2, mo) ||
      iso[7] != '-' || !read_int(iso, 8, 2, d)) {
    bad_timestamp(iso);
  }
  std::size_t pos = 10;
  if (pos < iso.size()) {
    if (iso[pos] != 'T' && iso[pos] != ' ') bad_timestamp(iso);
    if (!read_int(iso, pos + 1, 2, h) || pos + 3 >= iso.size() || iso[pos + 3] != ':' ||
        !read_int(iso, pos + 4, 2, mi)) {
      bad_timestamp(iso);
    }
    pos += 6;
    if (pos < iso.size() && iso[pos] == ':') {
      if (!read_int(iso, pos + 1, 2, s)) bad_timestamp(iso);
      pos += 3;
      if (pos < iso.size() && iso[pos] == '.') {
        ++pos;
        const std::size_t digits = pos;
        while (pos < iso.size() && iso[pos] >= '0' && iso[pos] <= '9') ++pos;
        if (pos == digits) bad_timestamp(iso);
      }
    }
    std::string_view zone = iso.substr(pos);
    if (zone != "Z" && zone != "+00:00" && zone != "-00:00") bad_timestamp(iso);
  }
  if (mo < 1 || mo > 12 || d < 1 || static_cast<unsigned>(d) > days_in_month(y, mo) || h > 23 ||
      mi > 59 || s > 59) {
    bad_timestamp(iso);
  }
  return from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), h, mi, s);
}

std::string Timestamp::to_iso() const {
  std::int64_t days = seconds / kSecondsPerDay;
  std::int64_t rem = seconds % kSecondsPerDay;
  if (rem < 0) {
    rem += kSecondsPerDay;
    --days;
  }
  const Civil c = civil_from_days(days);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                static_cast<long long>(c.y), c.m, c.d, static_cast<long long>(rem / 3600),
                static_cast<long long>(rem % 3600 / 60), static_cast<long long>(rem % 60));
  return buf;
}

std::string_view to_string(Sex v) {
  switch (v) {
    case Sex::male: return "male";
    case Sex::female: return "female";
    case Sex::other_unknown: return "other";
  }
  return "other";
}

std::string_view to_string(HousingStatus v) {
  switch (v) {
    case HousingStatus::housed: return "housed";
    case HousingStatus::homeless: return "homeless";
    case HousingStatus::unknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(InsuranceStatus v) {
  switch (v) {
    case InsuranceStatus::insured: return "insured";
    case InsuranceStatus::uninsured: return "uninsured";
    case InsuranceStatus::unknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(NoteType v) {
  switch (v) {
    case NoteType::progress: return "progress";
    case NoteType::discharge_summary: return "discharge_summary";
    case NoteType::hpi: return "hpi";
    case NoteType::consult: return "consult";
    case NoteType::other: return "other";
  }
  return "other";
}

std::string_view to_string(SectionLabel v) {
  switch (v) {
    case SectionLabel::chief_complaint: return "chief_complaint";
    case SectionLabel::hpi: return "hpi";
    case SectionLabel::assessment: return "assessment";
    case SectionLabel::plan: return "plan";
    case SectionLabel::other: return "other";
  }
  return "other";
}

std::string_view to_string(ChunkSource v) {
  switch (v) {
    case ChunkSource::note_section: return "note_section";
    case ChunkSource::lab_panel: return "lab_panel";
    case ChunkSource::medication_block: return "medication_block";
    case ChunkSource::demographic_summary: return "demographic_summary";
  }
  return "note_section";
}

std::string_view to_string(Task v) {
  switch (v) {
    case Task::non_opioid: return "non_opioid";
    case Task::opioid_any: return "opioid_any";
    case Task::opioid_standard_dose: return "opioid_standard_dose";
  }
  return "non_opioid";
}

std::optional<Sex> parse_sex(std::string_view s) {
  if (s == "male") return Sex::male;
  if (s == "female") return Sex::female;
  if (s == "other" || s == "unknown" || s == "other/unknown") return Sex::other_unknown;
  return std::nullopt;
}

std::optional<HousingStatus> parse_housing(std::string_view s) {
  if (s == "housed") return HousingStatus::housed;
  if (s == "homeless") return HousingStatus::homeless;
  if (s == "unknown") return HousingStatus::unknown;
  return std::nullopt;
}

std::optional<InsuranceStatus> parse_insurance(std::string_view s) {
  if (s == "insured") return InsuranceStatus::insured;
  if (s == "uninsured") return InsuranceStatus::uninsured;
  if (s == "unknown") return InsuranceStatus::unknown;
  return std::nullopt;
}

std::optional<NoteType> parse_note_type(std::string_view s) {
  if (s == "progress") return NoteType::progress;
  if (s == "discharge_summary") return NoteType::discharge_summary;
  if (s == "hpi") return NoteType::hpi;
  if (s == "consult") return NoteType::consult;
  if (s == "other") return NoteType::other;
  return std::nullopt;
}

std::optional<SectionLabel> parse_section_label(std::string_view s) {
  if (s == "chief_complaint") return SectionLabel::chief_complaint;
  if (s == "hpi") return SectionLabel::hpi;
  if (s == "assessment") return SectionLabel::assessment;
  if (s == "plan") return SectionLabel::plan;
  if (s == "other") return SectionLabel::other;
  return std::nullopt;
}

std::optional<ChunkSource> parse_chunk_source(std::string_view s) {
  if (s == "note_section") return ChunkSource::note_section;
  if (s == "lab_panel") return ChunkSource::lab_panel;
  if (s == "medication_block") return ChunkSource::medication_block;
  if (s == "demographic_summary") return ChunkSource::demographic_summary;
  return std::nullopt;
}

std::optional<Task> parse_task(std::string_view s) {
  if (s == "non_opioid") return Task::non_opioid;
  if (s == "opioid_any") return Task::opioid_any;
  if (s == "opioid_standard_dose") return Task::opioid_standard_dose;
  return std::nullopt;
}

bool OutcomeLabels::get(Task t) const {
  switch (t) {
    case Task::non_opioid: return non_opioid;
    case Task::opioid_any: return opioid_any;
    case Task::opioid_standard_dose: return opioid_standard_dose;
  }
  return false;
}

void RetrievalConfig::validate() const {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be positive", "k");
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "tau must lie in [0, 1]", "tau");
  }
  if (filters.recency_window_days && *filters.recency_window_days < 0) {
    throw Error(ErrorCode::InvalidArgument, "recency_window_days must be non-negative",
                "filters.recency_window_days");
  }
}

bool RetrievalSet::contains(std::string_view record_id) const {
  return std::any_of(cases.begin(), cases.end(),
                     [&](const RetrievedCase& c) { return c.record_id == record_id; });
}

}  // namespace prx
