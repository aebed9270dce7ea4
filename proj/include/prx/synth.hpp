#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prx/model.hpp"
#include "prx/resources.hpp"

// Deterministic synthetic ED corpora with rule-assigned treatments.
namespace prx::synth {

struct RuleCondition {
  std::optional<int> pain_min;
  std::optional<int> pain_max;
  std::optional<bool> opioid_naive;
  std::optional<int> age_min;
  std::optional<int> age_max;
  std::vector<std::string> diagnosis_prefix_any;
  std::vector<std::string> flags_present;  // any of
  std::vector<std::string> flags_absent;   // none of
};

struct PrescribingRule {
  std::string rule_id;
  RuleCondition when;
  std::string treatment;
  OutcomeLabels labels;
};

// Structured facts a rule predicate can see. pain is -1 when unrecorded.
struct RecordFeatures {
  int age = 0;
  int pain = -1;
  bool opioid_naive = true;
  std::vector<std::string> diagnoses;
  std::set<std::string> flags;
};

struct LabSpec {
  std::string name;
  double low = 0.0;
  double high = 0.0;
};

struct MedicationSpec {
  std::string name;
  bool active = true;
};

struct TemplateVariant {
  std::vector<std::string> diagnoses;
  std::map<std::string, std::string> slots;
  std::vector<LabSpec> labs;
  std::vector<MedicationSpec> medications;
};

struct CaseTemplate {
  std::string tag;
  double weight = 1.0;
  std::array<int, 2> age{18, 80};
  std::array<int, 2> pain{0, 10};
  std::array<int, 2> esi{3, 4};
  std::vector<TemplateVariant> variants;
  std::map<std::string, std::vector<std::string>> slots;
  std::vector<LabSpec> labs;
  std::vector<MedicationSpec> medications;
  std::string chief_complaint;
  std::string hpi;
  std::string assessment;
};

class RuleSet {
 public:
  // Throws InvalidArgument unless the last rule has an empty predicate.
  static RuleSet parse(const nlohmann::json& j);
  static RuleSet load(const std::filesystem::path& path);
  static const RuleSet& bundled_default();
  static const RuleSet& by_id(const std::string& rule_set_id);

  const std::string& id() const { return id_; }
  const std::vector<PrescribingRule>& rules() const { return rules_; }
  const std::vector<CaseTemplate>& templates() const { return templates_; }
  const std::map<std::string, std::vector<std::string>>& flags() const { return flags_; }

  RecordFeatures features(const PatientRecord& record, const Resources& resources) const;
  const PrescribingRule& match(const RecordFeatures& features) const;
  bool matches(const RuleCondition& cond, const RecordFeatures& features) const;
  const PrescribingRule* find_rule(std::string_view rule_id) const;

 private:
  std::string id_;
  std::vector<PrescribingRule> rules_;
  std::vector<CaseTemplate> templates_;
  std::map<std::string, std::vector<std::string>> flags_;
};

struct OracleResult {
  std::string rule_id;
  std::string treatment;
  OutcomeLabels labels;
};

OracleResult rule_oracle(const PatientRecord& record, const RuleSet& rules,
                         const Resources& resources = Resources::bundled());
inline OracleResult rule_oracle(const CaseRecord& record, const RuleSet& rules,
                                const Resources& resources = Resources::bundled()) {
  return rule_oracle(record.patient, rules, resources);
}

struct GenSpec {
  std::size_t n = 100;
  std::uint64_t seed = 7;
  double noise = 0.0;
  std::string rule_set_id = "default";
  double uninsured_fraction = 0.30;
  // Target positive rates for (non_opioid, opioid_any, opioid_standard_dose);
  // template weights are raked toward them when set.
  std::optional<std::array<double, 3>> label_priors;

  void validate() const;
};

struct OracleEntry {
  std::string record_id;
  std::string template_tag;
  std::string rule_id;
  std::string intended_treatment;
  OutcomeLabels intended_labels;
  std::string recorded_treatment;
  bool deviated = false;

  nlohmann::json to_json() const;
};

struct GeneratedCorpus {
  std::vector<CaseRecord> cases;
  std::vector<OracleEntry> oracle;
};

GeneratedCorpus generate(const GenSpec& spec, const RuleSet& rules,
                         const Resources& resources = Resources::bundled());
GeneratedCorpus generate(const GenSpec& spec);

std::vector<double> raked_weights(const RuleSet& rules, const std::array<double, 3>& priors,
                                  const Resources& resources = Resources::bundled());

void write_oracle(const std::filesystem::path& path, const std::vector<OracleEntry>& oracle);

}  // namespace prx::synth
