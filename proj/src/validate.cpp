#include "prx/validate.hpp"

#include <algorithm>

namespace prx {

namespace {

void check_observations(const std::vector<ObservationEvent>& events, const std::string& base,
                        ValidationReport& rep) {
  for (std::size_t i = 0; i < events.size(); ++i) {
    const std::string p = base + "[" + std::to_string(i) + "]";
    if (events[i].code.empty()) rep.violations.push_back({p + ".code", "code must be non-empty"});
  }
}

}  // namespace

ValidationReport validate(const PatientRecord& r) {
  ValidationReport rep;
  auto add = [&](std::string path, std::string msg) {
    rep.violations.push_back({std::move(path), std::move(msg)});
  };
  if (r.record_id.empty()) add("record_id", "record_id must be non-empty");
  if (r.demographics.age < 0 || r.demographics.age > 130) {
    add("demographics.age", "age must lie in [0, 130]");
  }
  if (r.esi < 1 || r.esi > 5) add("esi", "esi must be one of 1..5");
  if (r.comorbidity_count < 0) add("comorbidity_count", "comorbidity_count must be >= 0");
  if (r.recidivism < 1) add("recidivism", "recidivism must be >= 1");
  check_observations(r.vitals, "vitals", rep);
  check_observations(r.labs, "labs", rep);
  for (std::size_t i = 0; i < r.diagnoses.size(); ++i) {
    if (r.diagnoses[i].empty()) {
      add("diagnoses[" + std::to_string(i) + "]", "diagnosis code must be non-empty");
    }
  }
  for (std::size_t i = 0; i < r.medications.size(); ++i) {
    if (r.medications[i].name.empty()) {
      add("medications[" + std::to_string(i) + "].name", "medication must be non-empty");
    }
  }
  for (std::size_t i = 0; i < r.allergies.size(); ++i) {
    if (r.allergies[i].empty()) {
      add("allergies[" + std::to_string(i) + "]", "allergy code must be non-empty");
    }
  }
  for (std::size_t n = 0; n < r.notes.size(); ++n) {
    const auto& note = r.notes[n];
    const std::string p = "notes[" + std::to_string(n) + "]";
    if (note.note_id.empty()) add(p + ".note_id", "note_id must be non-empty");
    std::size_t prev_end = 0;
    for (std::size_t s = 0; s < note.sections.size(); ++s) {
      const auto& sec = note.sections[s];
      const std::string sp = p + ".sections[" + std::to_string(s) + "]";
      if (sec.start >= sec.end || sec.end > note.raw_text.size()) {
        add(sp + ".span", "span must satisfy start < end <= length of raw_text");
      } else if (sec.start < prev_end) {
        add(sp + ".span", "sections must be disjoint and in order");
      }
      prev_end = std::max(prev_end, sec.end);
    }
  }
  return rep;
}

ValidationReport validate(const CaseRecord& c) {
  ValidationReport rep = validate(c.patient);
  for (auto& v : rep.violations) v.path = "patient." + v.path;
  if (c.treatments.empty()) rep.violations.push_back({"treatments", "treatments must be non-empty"});
  for (auto& t : c.treatments) {
    if (t.empty()) rep.violations.push_back({"treatments", "treatment labels must be non-empty"});
  }
  if (c.labels.opioid_standard_dose && !c.labels.opioid_any) {
    rep.violations.push_back({"labels", "opioid_standard_dose requires opioid_any"});
  }
  return rep;
}

}  // namespace prx
