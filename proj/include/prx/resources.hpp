#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "prx/model.hpp"

namespace prx {

struct LoincEntry {
  std::string code;
  std::string display;
  double ref_low = 0.0;
  double ref_high = 0.0;
  std::string unit;
};

struct RxEntry {
  std::string ingredient;
  std::string rxcui;
  std::string drug_class;
};

struct HeaderEntry {
  std::string phrase;  // lowercase
  SectionLabel label = SectionLabel::other;
};

struct TreatmentEntry {
  std::string label;
  std::string regimen;
  std::string drug_class;
  OutcomeLabels labels;
};

// Vocabulary tables and lexicons used across the pipeline. The bundled set
// is compiled into the library from data/; `load` reads an override
// directory and falls back to the bundled copy for any file it lacks.
class Resources {
 public:
  static const Resources& bundled();
  static Resources load(const std::filesystem::path& dir);
  static Resources from_files(const std::map<std::string, std::string>& files);

  const LoincEntry* loinc_by_name(std::string_view name) const;
  const LoincEntry* loinc_by_code(std::string_view code) const;
  const RxEntry* rx_by_name(std::string_view name) const;
  std::optional<std::string> drug_class_of(std::string_view ingredient) const;
  bool is_known_ingredient(std::string_view name) const;
  std::optional<std::string> panel_for(std::string_view loinc_code) const;
  std::optional<std::string> diagnosis_display(std::string_view icd10) const;
  const TreatmentEntry* treatment(std::string_view label) const;
  std::vector<std::string> treatment_labels() const;  // sorted

  const std::vector<HeaderEntry>& headers() const { return headers_; }
  const std::map<std::string, std::string>& abbreviations() const { return abbreviations_; }
  const std::set<std::string>& deid_names() const { return deid_names_; }
  const std::vector<std::string>& deid_locations() const { return deid_locations_; }
  const std::string& default_rules_json() const { return default_rules_; }

 private:
  std::unordered_map<std::string, LoincEntry> loinc_by_name_;
  std::unordered_map<std::string, LoincEntry> loinc_by_code_;
  std::unordered_map<std::string, RxEntry> rx_by_name_;
  std::unordered_map<std::string, std::string> panels_;
  std::unordered_map<std::string, std::string> icd10_;
  std::unordered_map<std::string, TreatmentEntry> treatments_;
  std::vector<HeaderEntry> headers_;
  std::map<std::string, std::string> abbreviations_;
  std::set<std::string> deid_names_;
  std::vector<std::string> deid_locations_;
  std::string default_rules_;
};

// Tab-separated rows, skipping blank lines and `#` comments.
std::vector<std::vector<std::string>> parse_tsv(std::string_view text);

}  // namespace prx
