#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prx/errors.hpp"
#include "prx/model.hpp"
#include "prx/resources.hpp"

// Preprocessing of raw records: normalize -> segment -> expand ->
// deidentify -> order -> window, then chunking for the encoder.
namespace prx::ingest {

struct DeidConfig {
  std::string secret_key = "precedent-rx-default-key";
  int date_shift_range_days = 365;
};

enum class WindowAnchor { encounter_time, latest_event };

struct WindowConfig {
  bool enabled = true;
  int window_days = 90;
  WindowAnchor anchor = WindowAnchor::encounter_time;
};

struct ChunkingConfig {
  std::size_t min_tokens = 100;
  std::size_t max_tokens = 200;
};

struct NormalizationReport {
  std::size_t unmapped_labs = 0;
  std::size_t unmapped_medications = 0;

  NormalizationReport& operator+=(const NormalizationReport& o) {
    unmapped_labs += o.unmapped_labs;
    unmapped_medications += o.unmapped_medications;
    return *this;
  }
};

inline constexpr std::string_view kUnmappedPrefix = "unmapped:";

// Throws MalformedCode for diagnosis codes that are not letter + 2 digits +
// optional dot suffix after upper-casing.
PatientRecord normalize_structured(PatientRecord record, const Resources& resources,
                                   NormalizationReport* report = nullptr);
bool is_icd10_syntax(std::string_view code);

std::vector<NoteSection> segment_note(std::string_view raw_text,
                                      const std::vector<HeaderEntry>& lexicon);

class AbbreviationDictionary {
 public:
  // Rejects entries whose expansion would itself be rewritten, which keeps
  // expansion idempotent.
  explicit AbbreviationDictionary(std::map<std::string, std::string> entries);

  std::string expand(std::string_view text) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, std::string> entries_;
  std::size_t longest_ = 0;
};

std::string expand_abbreviations(std::string_view text, const AbbreviationDictionary& dictionary);

// Pseudonym for an identifier of `kind` (NAME, LOC, MRN):
// "[KIND_xxxx]" where xxxx are the first four hex digits of
// HMAC-SHA256(key, KIND + ":" + surface).
std::string pseudonym(std::string_view kind, std::string_view surface, const DeidConfig& cfg);
std::int64_t date_shift_days(std::string_view record_id, const DeidConfig& cfg);
std::string deidentify_text(std::string_view text, const DeidConfig& cfg, std::int64_t shift_days,
                            const Resources& resources);
PatientRecord deidentify(PatientRecord record, const DeidConfig& cfg, const Resources& resources);

PatientRecord temporal_order(PatientRecord record);
PatientRecord apply_window(PatientRecord record, const WindowConfig& cfg);

// Byte ranges of `text` packed into chunks of [min, max] canonical tokens,
// preferring sentence boundaries; only the final range may be short.
std::vector<std::pair<std::size_t, std::size_t>> split_into_chunks(std::string_view text,
                                                                   const ChunkingConfig& cfg);
std::string render_demographic_summary(const PatientRecord& record, const Resources& resources);
std::vector<Chunk> chunk_record(const PatientRecord& record, const Resources& resources,
                                const ChunkingConfig& cfg = {});

struct PipelineConfig {
  DeidConfig deid;
  WindowConfig window;
  bool expand_abbreviations = true;
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg, const Resources& resources = Resources::bundled());

  // Runs every step but chunking. Throws on the first failing step.
  PatientRecord run(PatientRecord raw, NormalizationReport* report = nullptr) const;
  CaseRecord run(CaseRecord raw, NormalizationReport* report = nullptr) const;

  const PipelineConfig& config() const { return cfg_; }
  const Resources& resources() const { return resources_; }

 private:
  PipelineConfig cfg_;
  const Resources& resources_;
  AbbreviationDictionary dictionary_;
};

struct LineError {
  std::size_t line = 0;  // 1-based
  ErrorCode code = ErrorCode::SchemaError;
  std::string path;
  std::string message;
};

struct IngestReport {
  std::size_t lines_total = 0;
  std::size_t records_ok = 0;
  std::vector<LineError> errors;
  std::vector<std::string> warnings;
  NormalizationReport normalization;

  nlohmann::json to_json() const;
};

struct IngestResult {
  std::vector<CaseRecord> cases;
  IngestReport report;
};

// Blank lines are skipped (and not counted as records).
IngestResult ingest_jsonl(std::string_view text, const Pipeline& pipeline, unsigned threads = 0);
IngestResult ingest_corpus(const std::filesystem::path& path, const Pipeline& pipeline,
                           unsigned threads = 0);

std::string encode_corpus(const std::vector<CaseRecord>& cases);
void write_corpus(const std::filesystem::path& path, const std::vector<CaseRecord>& cases);
// Strict reader for already-canonical corpora; any bad line throws.
std::vector<CaseRecord> read_corpus(const std::filesystem::path& path);

}  // namespace prx::ingest
