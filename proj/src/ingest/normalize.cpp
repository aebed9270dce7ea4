#include <cctype>

#include "prx/ingest.hpp"
#include "prx/text.hpp"

namespace prx::ingest {

bool is_icd10_syntax(std::string_view c) {
  if (c.size() < 3 || !std::isupper(static_cast<unsigned char>(c[0])) ||
      !std::isdigit(static_cast<unsigned char>(c[1])) ||
      !std::isdigit(static_cast<unsigned char>(c[2]))) {
    return false;
  }
  if (c.size() == 3) return true;
  if (c[3] != '.' || c.size() < 5 || c.size() > 8) return false;
  for (std::size_t i = 4; i < c.size(); ++i) {
    const unsigned char ch = static_cast<unsigned char>(c[i]);
    if (!std::isdigit(ch) && !std::isupper(ch)) return false;
  }
  return true;
}

namespace {

bool is_unmapped(std::string_view s) { return s.substr(0, kUnmappedPrefix.size()) == kUnmappedPrefix; }

void normalize_observation(ObservationEvent& e, const Resources& res, std::size_t& unmapped) {
  if (is_unmapped(e.code)) return;
  const LoincEntry* entry = nullptr;
  if (!e.name.empty()) entry = res.loinc_by_name(e.name);
  if (!entry && !e.code.empty()) entry = res.loinc_by_code(text::trim(e.code));
  if (entry) {
    e.code = entry->code;
    e.name = entry->display;
    if (e.unit.empty()) e.unit = entry->unit;
    return;
  }
  const std::string surface = text::to_lower_ascii(text::trim(e.name.empty() ? e.code : e.name));
  e.code = std::string(kUnmappedPrefix) + surface;
  if (e.name.empty()) e.name = surface;
  ++unmapped;
}

}  // namespace

PatientRecord normalize_structured(PatientRecord r, const Resources& res,
                                   NormalizationReport* report) {
  NormalizationReport local;
  for (std::size_t i = 0; i < r.diagnoses.size(); ++i) {
    std::string code = text::to_upper_ascii(text::trim(r.diagnoses[i]));
    if (!is_icd10_syntax(code)) {
      throw Error(ErrorCode::MalformedCode,
                  "diagnosis code '" + r.diagnoses[i] + "' is not valid ICD-10 syntax",
                  "diagnoses[" + std::to_string(i) + "]");
    }
    r.diagnoses[i] = std::move(code);
  }
  for (auto& e : r.labs) normalize_observation(e, res, local.unmapped_labs);
  for (auto& e : r.vitals) normalize_observation(e, res, local.unmapped_labs);
  for (auto& m : r.medications) {
    if (is_unmapped(m.name)) continue;
    if (const RxEntry* rx = res.rx_by_name(m.name)) {
      m.name = rx->ingredient;
      m.code = rx->rxcui;
    } else {
      m.name = std::string(kUnmappedPrefix) + text::to_lower_ascii(text::trim(m.name));
      ++local.unmapped_medications;
    }
  }
  for (auto& a : r.allergies) {
    a = text::trim(a);
    if (const RxEntry* rx = res.rx_by_name(a)) a = rx->ingredient;
  }
  if (report) *report += local;
  return r;
}

}  // namespace prx::ingest
