#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace prx {

// Seconds since the Unix epoch, UTC. Rendered as `YYYY-MM-DDTHH:MM:SSZ`.
struct Timestamp {
  std::int64_t seconds = 0;

  static Timestamp parse(std::string_view iso);
  static Timestamp from_civil(int year, unsigned month, unsigned day,
                              int hour = 0, int minute = 0, int second = 0);
  std::string to_iso() const;
  Timestamp plus_days(std::int64_t days) const { return {seconds + days * 86400}; }

  auto operator<=>(const Timestamp&) const = default;
};

constexpr std::int64_t kSecondsPerDay = 86400;

enum class Sex { male, female, other_unknown };
enum class HousingStatus { housed, homeless, unknown };
enum class InsuranceStatus { insured, uninsured, unknown };
enum class NoteType { progress, discharge_summary, hpi, consult, other };
enum class SectionLabel { chief_complaint, hpi, assessment, plan, other };
enum class ChunkSource { note_section, lab_panel, medication_block, demographic_summary };
enum class Task { non_opioid, opioid_any, opioid_standard_dose };

std::string_view to_string(Sex v);
std::string_view to_string(HousingStatus v);
std::string_view to_string(InsuranceStatus v);
std::string_view to_string(NoteType v);
std::string_view to_string(SectionLabel v);
std::string_view to_string(ChunkSource v);
std::string_view to_string(Task v);

std::optional<Sex> parse_sex(std::string_view s);
std::optional<HousingStatus> parse_housing(std::string_view s);
std::optional<InsuranceStatus> parse_insurance(std::string_view s);
std::optional<NoteType> parse_note_type(std::string_view s);
std::optional<SectionLabel> parse_section_label(std::string_view s);
std::optional<ChunkSource> parse_chunk_source(std::string_view s);
std::optional<Task> parse_task(std::string_view s);

inline constexpr Task kAllTasks[] = {Task::non_opioid, Task::opioid_any,
                                     Task::opioid_standard_dose};

struct Demographics {
  int age = 0;
  Sex sex = Sex::other_unknown;
  std::string race;
  HousingStatus housing_status = HousingStatus::unknown;
  InsuranceStatus insurance_status = InsuranceStatus::unknown;

  bool operator==(const Demographics&) const = default;
};

// Vitals and labs. `code` is LOINC after normalization.
struct ObservationEvent {
  std::string code;
  std::string name;
  double value = 0.0;
  std::string unit;
  Timestamp timestamp;

  bool operator==(const ObservationEvent&) const = default;
};

// `name` is the RxNorm ingredient after normalization, `code` its RxCUI.
struct MedicationEvent {
  std::string name;
  std::string code;
  bool active = false;
  Timestamp timestamp;

  bool operator==(const MedicationEvent&) const = default;
};

struct NoteSection {
  SectionLabel label = SectionLabel::other;
  std::string header;  // header as written; "preamble" for leading text
  std::string text;
  std::size_t start = 0;  // span over raw_text, header line included
  std::size_t end = 0;

  bool operator==(const NoteSection&) const = default;
};

struct ClinicalNote {
  std::string note_id;
  NoteType note_type = NoteType::other;
  Timestamp timestamp;
  std::string raw_text;
  std::vector<NoteSection> sections;

  bool operator==(const ClinicalNote&) const = default;
};

struct PatientRecord {
  std::string record_id;
  Timestamp encounter_time;
  Demographics demographics;
  std::vector<ObservationEvent> vitals;
  std::vector<ObservationEvent> labs;
  std::vector<std::string> diagnoses;
  std::vector<MedicationEvent> medications;
  std::vector<std::string> allergies;
  int comorbidity_count = 0;
  int esi = 3;
  int recidivism = 1;
  std::vector<ClinicalNote> notes;
  bool deidentified = false;

  bool operator==(const PatientRecord&) const = default;
};

struct OutcomeLabels {
  bool non_opioid = false;
  bool opioid_any = false;
  bool opioid_standard_dose = false;

  bool get(Task t) const;
  bool operator==(const OutcomeLabels&) const = default;
};

struct CaseRecord {
  PatientRecord patient;
  std::set<std::string> treatments;
  OutcomeLabels labels;

  bool operator==(const CaseRecord&) const = default;
};

struct Chunk {
  std::string chunk_id;
  std::string source_record;
  ChunkSource source_type = ChunkSource::note_section;
  std::string source_detail;
  Timestamp timestamp;
  std::string text;
  std::size_t token_count = 0;

  bool operator==(const Chunk&) const = default;
};

struct Embedding {
  std::vector<float> values;

  std::size_t dim() const noexcept { return values.size(); }
  bool operator==(const Embedding&) const = default;
};

struct RetrievalFilters {
  std::optional<int> diagnosis_overlap_min;
  std::optional<int> recency_window_days;
  std::optional<std::string> medication_class;

  bool empty() const {
    return !diagnosis_overlap_min && !recency_window_days && !medication_class;
  }
  bool operator==(const RetrievalFilters&) const = default;
};

struct RetrievalConfig {
  std::size_t k = 5;
  double tau = 0.80;
  RetrievalFilters filters;

  // Throws InvalidArgument when k == 0 or tau is outside [0, 1].
  void validate() const;
  bool operator==(const RetrievalConfig&) const = default;
};

struct ChunkMatch {
  std::string chunk_id;
  double similarity = 0.0;

  bool operator==(const ChunkMatch&) const = default;
};

struct RetrievedCase {
  std::string record_id;
  std::set<std::string> treatments;
  OutcomeLabels labels;
  double similarity = 0.0;
  // Similarity over the demographic/complaint/diagnosis profile, used by the
  // consistency protocol when present.
  std::optional<double> profile_similarity;
  int rank = 0;
  std::vector<ChunkMatch> matched_chunks;
  std::shared_ptr<const CaseRecord> case_record;  // null for metadata-only indexes

  bool operator==(const RetrievedCase& o) const {
    return record_id == o.record_id && treatments == o.treatments && labels == o.labels &&
           similarity == o.similarity && profile_similarity == o.profile_similarity &&
           rank == o.rank && matched_chunks == o.matched_chunks;
  }
};

enum class RankingKey { similarity, overlap_similarity_recency };

struct RetrievalSet {
  std::vector<RetrievedCase> cases;
  std::size_t k = 0;
  double tau = 0.0;
  RankingKey ordering = RankingKey::similarity;

  bool empty() const noexcept { return cases.empty(); }
  std::size_t size() const noexcept { return cases.size(); }
  bool contains(std::string_view record_id) const;
  bool operator==(const RetrievalSet&) const = default;
};

struct RecommendationItem {
  std::string treatment;
  double confidence = 0.0;
  std::vector<std::string> supporting_case_ids;
  std::optional<std::string> rationale;

  bool operator==(const RecommendationItem&) const = default;
};

struct Recommendation {
  std::vector<RecommendationItem> items;
  std::string prompt_hash;

  bool operator==(const Recommendation&) const = default;
};

}  // namespace prx
