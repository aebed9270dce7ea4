#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "prx/ingest.hpp"
#include "prx/model.hpp"
#include "prx/synth.hpp"

namespace prx::testing {

inline PatientRecord sample_patient() {
  PatientRecord p;
  p.record_id = "P-100";
  p.encounter_time = Timestamp::parse("2023-03-10T14:00:00Z");
  p.demographics = {54, Sex::female, "white", HousingStatus::housed, InsuranceStatus::insured};
  p.vitals.push_back({"", "pain score", 8, "", Timestamp::parse("2023-03-10T13:30:00Z")});
  p.labs.push_back({"", "creatinine", 0.9, "mg/dL", Timestamp::parse("2023-03-10T13:00:00Z")});
  p.diagnoses = {"s52.501a"};
  p.medications.push_back({"Tylenol", "", false, Timestamp::parse("2023-02-01T00:00:00Z")});
  p.allergies = {"penicillin"};
  p.comorbidity_count = 1;
  p.esi = 3;
  p.recidivism = 2;
  ClinicalNote n;
  n.note_id = "N1";
  n.note_type = NoteType::hpi;
  n.timestamp = Timestamp::parse("2023-03-10T13:45:00Z");
  n.raw_text =
      "ED note for Mrs. Garcia, MRN: 4455667, seen at Towson on 03/10/2023.\n"
      "Chief Complaint: wrist pain after a fall, pain 8/10.\n"
      "HPI: 54 y/o female c/o severe wrist pain since 2023-03-10. Denies head strike.\n"
      "Assessment: distal radius fracture.\n"
      "Plan: splint, analgesia, ortho follow up.\n";
  p.notes.push_back(n);
  return p;
}

inline CaseRecord sample_case() {
  CaseRecord c;
  c.patient = sample_patient();
  c.treatments = {"oxycodone:standard"};
  c.labels = {false, true, true};
  return c;
}

inline std::vector<CaseRecord> preprocessed_synthetic(std::size_t n, std::uint64_t seed, double noise = 0.0) {
  synth::GenSpec spec;
  spec.n = n;
  spec.seed = seed;
  spec.noise = noise;
  auto corpus = synth::generate(spec);
  ingest::Pipeline pipeline({});
  std::vector<CaseRecord> out;
  for (auto& c : corpus.cases) out.push_back(pipeline.run(std::move(c)));
  return out;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("prx_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace prx::testing
