#include "prx/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "prx/errors.hpp"
#include "prx/json_io.hpp"
#include "prx/rng.hpp"
#include "prx/text.hpp"

namespace prx::synth {

using nlohmann::json;

namespace {

[[noreturn]] void bad_rules(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::InvalidArgument, "rule set " + path + ": " + what, path);
}

std::optional<int> opt_int(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer()) bad_rules(key, "expected an integer");
  return it->get<int>();
}

std::vector<std::string> strings(const json& j, const char* key) {
  std::vector<std::string> out;
  auto it = j.find(key);
  if (it == j.end()) return out;
  if (!it->is_array()) bad_rules(key, "expected an array of strings");
  for (const auto& s : *it) out.push_back(s.get<std::string>());
  return out;
}

std::array<int, 2> int_range(const json& j, const char* key, std::array<int, 2> fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_array() || it->size() != 2) bad_rules(key, "expected [lo, hi]");
  std::array<int, 2> r{(*it)[0].get<int>(), (*it)[1].get<int>()};
  if (r[0] > r[1]) bad_rules(key, "range lower bound exceeds upper bound");
  return r;
}

std::vector<LabSpec> parse_labs(const json& j) {
  std::vector<LabSpec> out;
  auto it = j.find("labs");
  if (it == j.end()) return out;
  for (const auto& l : *it) {
    const auto& r = l.at("range");
    out.push_back({l.at("name").get<std::string>(), r.at(0).get<double>(), r.at(1).get<double>()});
  }
  return out;
}

std::vector<MedicationSpec> parse_meds(const json& j) {
  std::vector<MedicationSpec> out;
  auto it = j.find("medications");
  if (it == j.end()) return out;
  for (const auto& m : *it) out.push_back({m.at("name").get<std::string>(), m.value("active", true)});
  return out;
}

std::string fill(std::string_view tmpl, const std::map<std::string, std::string>& slots) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    if (tmpl[pos] == '{') {
      const std::size_t close = tmpl.find('}', pos);
      if (close != std::string_view::npos) {
        auto it = slots.find(std::string(tmpl.substr(pos + 1, close - pos - 1)));
        if (it != slots.end()) {
          out += it->second;
          pos = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[pos++]);
  }
  return out;
}

const OutcomeLabels& labels_of(const std::string& treatment, const Resources& res) {
  const TreatmentEntry* e = res.treatment(treatment);
  if (!e) throw Error(ErrorCode::InvalidArgument, "treatment '" + treatment + "' is not in the vocabulary");
  return e->labels;
}

std::string two_digits(int v) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d", v);
  return buf;
}

}  // namespace

RuleSet RuleSet::parse(const json& j) {
  RuleSet rs;
  if (!j.is_object()) bad_rules("", "expected an object");
  rs.id_ = j.value("rule_set_id", std::string("custom"));
  if (auto it = j.find("flags"); it != j.end()) {
    for (const auto& [name, prefixes] : it->items()) {
      for (const auto& p : prefixes) rs.flags_[name].push_back(p.get<std::string>());
    }
  }
  const auto rules = j.find("rules");
  if (rules == j.end() || !rules->is_array() || rules->empty()) bad_rules("rules", "at least one rule required");
  for (const auto& r : *rules) {
    PrescribingRule rule;
    rule.rule_id = r.at("rule_id").get<std::string>();
    const json& w = r.value("when", json::object());
    rule.when.pain_min = opt_int(w, "pain_min");
    rule.when.pain_max = opt_int(w, "pain_max");
    rule.when.age_min = opt_int(w, "age_min");
    rule.when.age_max = opt_int(w, "age_max");
    if (auto it = w.find("opioid_naive"); it != w.end()) rule.when.opioid_naive = it->get<bool>();
    rule.when.diagnosis_prefix_any = strings(w, "diagnosis_prefix_any");
    rule.when.flags_present = strings(w, "flags_present");
    rule.when.flags_absent = strings(w, "flags_absent");
    for (const auto& f : rule.when.flags_present) {
      if (!rs.flags_.count(f)) bad_rules(rule.rule_id, "unknown flag " + f);
    }
    for (const auto& f : rule.when.flags_absent) {
      if (!rs.flags_.count(f)) bad_rules(rule.rule_id, "unknown flag " + f);
    }
    rule.treatment = r.at("treatment").get<std::string>();
    rule.labels = json_io::decode_labels(r.at("labels"), rule.rule_id + ".labels");
    if (rule.labels.opioid_standard_dose && !rule.labels.opioid_any) {
      bad_rules(rule.rule_id, "opioid_standard_dose requires opioid_any");
    }
    rs.rules_.push_back(std::move(rule));
  }
  const auto& last = rs.rules_.back().when;
  if (last.pain_min || last.pain_max || last.opioid_naive || last.age_min || last.age_max ||
      !last.diagnosis_prefix_any.empty() || !last.flags_present.empty() || !last.flags_absent.empty()) {
    bad_rules(rs.rules_.back().rule_id, "the last rule must match every record");
  }
  if (auto it = j.find("templates"); it != j.end()) {
    for (const auto& t : *it) {
      CaseTemplate ct;
      ct.tag = t.at("tag").get<std::string>();
      ct.weight = t.value("weight", 1.0);
      ct.age = int_range(t, "age", ct.age);
      ct.pain = int_range(t, "pain", ct.pain);
      ct.esi = int_range(t, "esi", ct.esi);
      for (const auto& v : t.at("variants")) {
        TemplateVariant tv;
        tv.diagnoses = strings(v, "diagnoses");
        if (auto s = v.find("slots"); s != v.end()) {
          for (const auto& [k, val] : s->items()) tv.slots[k] = val.get<std::string>();
        }
        tv.labs = parse_labs(v);
        tv.medications = parse_meds(v);
        ct.variants.push_back(std::move(tv));
      }
      if (ct.variants.empty()) bad_rules(ct.tag, "template needs at least one variant");
      if (auto s = t.find("slots"); s != t.end()) {
        for (const auto& [k, vals] : s->items()) {
          for (const auto& v : vals) ct.slots[k].push_back(v.get<std::string>());
        }
      }
      ct.labs = parse_labs(t);
      ct.medications = parse_meds(t);
      ct.chief_complaint = t.at("chief_complaint").get<std::string>();
      ct.hpi = t.at("hpi").get<std::string>();
      ct.assessment = t.value("assessment", std::string());
      if (!(ct.weight >= 0.0)) bad_rules(ct.tag, "weight must be non-negative");
      rs.templates_.push_back(std::move(ct));
    }
  }
  return rs;
}

RuleSet RuleSet::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open rule set " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(json_io::parse(ss.str()));
}

const RuleSet& RuleSet::bundled_default() {
  static const RuleSet rs = parse(json_io::parse(Resources::bundled().default_rules_json()));
  return rs;
}

const RuleSet& RuleSet::by_id(const std::string& id) {
  if (id == "default") return bundled_default();
  throw Error(ErrorCode::NotFound, "unknown rule set '" + id + "'", "rule_set_id");
}

const PrescribingRule* RuleSet::find_rule(std::string_view rule_id) const {
  for (const auto& r : rules_) {
    if (r.rule_id == rule_id) return &r;
  }
  return nullptr;
}

RecordFeatures RuleSet::features(const PatientRecord& r, const Resources& res) const {
  RecordFeatures f;
  f.age = r.demographics.age;
  std::optional<Timestamp> pain_time;
  for (const auto& v : r.vitals) {
    bool is_pain = v.code == "72514-3";
    if (!is_pain && v.code.empty()) {
      const LoincEntry* e = res.loinc_by_name(v.name);
      is_pain = e && e->code == "72514-3";
    }
    if (is_pain && (!pain_time || !(v.timestamp < *pain_time))) {
      pain_time = v.timestamp;
      f.pain = static_cast<int>(std::lround(v.value));
    }
  }
  for (const auto& m : r.medications) {
    if (res.drug_class_of(m.name) == std::optional<std::string>("opioid")) f.opioid_naive = false;
  }
  for (const auto& d : r.diagnoses) f.diagnoses.push_back(text::to_upper_ascii(text::trim(d)));
  for (const auto& [flag, prefixes] : flags_) {
    for (const auto& d : f.diagnoses) {
      if (std::any_of(prefixes.begin(), prefixes.end(),
                      [&](const std::string& p) { return d.rfind(p, 0) == 0; })) {
        f.flags.insert(flag);
      }
    }
  }
  return f;
}

bool RuleSet::matches(const RuleCondition& c, const RecordFeatures& f) const {
  if (c.pain_min && (f.pain < 0 || f.pain < *c.pain_min)) return false;
  if (c.pain_max && (f.pain < 0 || f.pain > *c.pain_max)) return false;
  if (c.opioid_naive && f.opioid_naive != *c.opioid_naive) return false;
  if (c.age_min && f.age < *c.age_min) return false;
  if (c.age_max && f.age > *c.age_max) return false;
  if (!c.diagnosis_prefix_any.empty()) {
    bool any = false;
    for (const auto& d : f.diagnoses) {
      for (const auto& p : c.diagnosis_prefix_any) any = any || d.rfind(p, 0) == 0;
    }
    if (!any) return false;
  }
  if (!c.flags_present.empty() &&
      std::none_of(c.flags_present.begin(), c.flags_present.end(),
                   [&](const std::string& fl) { return f.flags.count(fl) > 0; })) {
    return false;
  }
  for (const auto& fl : c.flags_absent) {
    if (f.flags.count(fl)) return false;
  }
  return true;
}

const PrescribingRule& RuleSet::match(const RecordFeatures& f) const {
  for (const auto& r : rules_) {
    if (matches(r.when, f)) return r;
  }
  return rules_.back();
}

OracleResult rule_oracle(const PatientRecord& record, const RuleSet& rules, const Resources& res) {
  const auto& rule = rules.match(rules.features(record, res));
  return {rule.rule_id, rule.treatment, rule.labels};
}

void GenSpec::validate() const {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "n must be positive", "n");
  if (!(noise >= 0.0 && noise <= 1.0)) throw Error(ErrorCode::InvalidArgument, "noise must lie in [0, 1]", "noise");
  if (!(uninsured_fraction >= 0.0 && uninsured_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "uninsured_fraction must lie in [0, 1]", "uninsured_fraction");
  }
  if (label_priors) {
    for (double p : *label_priors) {
      if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidArgument, "label priors must lie in (0, 1)", "label_priors");
    }
  }
}

nlohmann::json OracleEntry::to_json() const {
  return {{"record_id", record_id},
          {"template", template_tag},
          {"rule_id", rule_id},
          {"intended_treatment", intended_treatment},
          {"intended_labels", json_io::encode(intended_labels)},
          {"recorded_treatment", recorded_treatment},
          {"deviated", deviated}};
}

namespace {

struct Draft {
  CaseRecord record;
  std::string tag;
};

Draft render_record(const CaseTemplate& t, std::size_t index, std::uint64_t seed, bool uninsured,
                    const Resources& res, const std::vector<std::string>& names) {
  Rng rng(derive_seed(seed, index));
  const auto& variant = rng.pick(t.variants);
  PatientRecord p;
  char id[48];
  std::snprintf(id, sizeof id, "SYN-%llu-%05zu", static_cast<unsigned long long>(seed), index);
  p.record_id = id;

  auto& d = p.demographics;
  d.age = rng.range(t.age[0], t.age[1]);
  const double sx = rng.uniform01();
  d.sex = sx < 0.49 ? Sex::male : sx < 0.98 ? Sex::female : Sex::other_unknown;
  static const std::vector<std::string> kRace = {"white", "black", "asian", "hispanic", "other"};
  d.race = kRace[rng.weighted({0.45, 0.35, 0.06, 0.09, 0.05})];
  const double hs = rng.uniform01();
  d.housing_status = hs < 0.90 ? HousingStatus::housed : hs < 0.97 ? HousingStatus::homeless : HousingStatus::unknown;
  d.insurance_status = uninsured ? InsuranceStatus::uninsured : InsuranceStatus::insured;

  const int pain = rng.range(t.pain[0], t.pain[1]);
  p.esi = rng.range(t.esi[0], t.esi[1]);
  p.comorbidity_count = rng.range(0, 4);
  p.recidivism = rng.range(1, 6);
  p.diagnoses = variant.diagnoses;
  if (p.comorbidity_count >= 2 && rng.bernoulli(0.5)) p.diagnoses.push_back("I10");
  if (p.comorbidity_count >= 3 && rng.bernoulli(0.5)) p.diagnoses.push_back("E11.9");
  if (rng.bernoulli(0.1)) p.allergies.push_back("penicillin");

  const Timestamp base = Timestamp::from_civil(2023, 1, 1);
  p.encounter_time = {base.seconds + static_cast<std::int64_t>(rng.below(365)) * kSecondsPerDay +
                      static_cast<std::int64_t>(rng.range(6 * 3600, 22 * 3600))};
  const Timestamp triage{p.encounter_time.seconds - 1800};
  p.vitals.push_back({"", "pain score", static_cast<double>(pain), "", triage});
  p.vitals.push_back({"", "heart rate", static_cast<double>(rng.range(62, 104)), "", triage});
  p.vitals.push_back({"", "systolic blood pressure", static_cast<double>(rng.range(104, 152)), "", triage});
  p.vitals.push_back({"", "temperature", std::round(rng.uniform(36.3, 37.6) * 10) / 10, "", triage});
  auto add_labs = [&](const std::vector<LabSpec>& labs) {
    for (const auto& l : labs) {
      const double v = std::round(rng.uniform(l.low, l.high) * 10) / 10;
      p.labs.push_back({"", l.name, v, "", Timestamp{p.encounter_time.seconds - 3600}});
    }
  };
  add_labs(t.labs);
  add_labs(variant.labs);
  auto add_meds = [&](const std::vector<MedicationSpec>& meds) {
    for (const auto& m : meds) {
      p.medications.push_back(
          {m.name, "", m.active, p.encounter_time.plus_days(-static_cast<int>(rng.range(3, 30)))});
    }
  };
  add_meds(t.medications);
  add_meds(variant.medications);

  std::map<std::string, std::string> slots = variant.slots;
  for (const auto& [k, vals] : t.slots) {
    if (!slots.count(k) && !vals.empty()) slots[k] = rng.pick(vals);
  }
  slots["age"] = std::to_string(d.age);
  slots["pain"] = std::to_string(pain);
  slots["sex"] = d.sex == Sex::male ? "male" : d.sex == Sex::female ? "female" : "patient";
  slots["title"] = d.sex == Sex::male ? "Mr." : d.sex == Sex::female ? (rng.bernoulli(0.5) ? "Ms." : "Mrs.") : "Mx.";
  slots["lastname"] = rng.pick(names);
  const std::string doctor = rng.pick(names);

  const std::string visit = p.encounter_time.to_iso();
  std::string mrn = std::to_string(1000000 + rng.below(9000000));
  const auto& locs = res.deid_locations();
  const std::string site = locs.empty() ? std::string("the hospital") : rng.pick(locs);
  std::string note = "Emergency department provider note. MRN: " + mrn + ". Seen at " + site +
                     " on " + visit.substr(5, 2) + "/" + visit.substr(8, 2) + "/" + visit.substr(0, 4) + ".\n";
  note += "Chief Complaint: " + fill(t.chief_complaint, slots) + "\n";
  note += "History of Present Illness: " + fill(t.hpi, slots) + "\n";
  if (!t.assessment.empty()) note += "Assessment: " + fill(t.assessment, slots) + "\n";
  note += "Plan: Analgesic plan per attending Dr. " + doctor + ", reassess pain before discharge and arrange follow up.\n";
  p.notes.push_back({"note-" + std::to_string(index), NoteType::hpi, Timestamp{p.encounter_time.seconds - 600}, note, {}});

  Draft draft;
  draft.record.patient = std::move(p);
  draft.tag = t.tag;
  return draft;
}

}  // namespace

std::vector<double> raked_weights(const RuleSet& rules, const std::array<double, 3>& priors,
                                  const Resources& res) {
  const auto& ts = rules.templates();
  std::vector<double> w;
  std::vector<OutcomeLabels> y;
  const auto names = std::vector<std::string>(res.deid_names().begin(), res.deid_names().end());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    w.push_back(ts[i].weight);
    auto draft = render_record(ts[i], i, 0, false, res, names);
    y.push_back(rule_oracle(draft.record.patient, rules, res).labels);
  }
  for (int iter = 0; iter < 200; ++iter) {
    for (std::size_t j = 0; j < 3; ++j) {
      const Task task = kAllTasks[j];
      double total = 0.0, pos = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        total += w[i];
        if (y[i].get(task)) pos += w[i];
      }
      if (total <= 0.0 || pos <= 0.0 || pos >= total) continue;
      const double rate = pos / total;
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] *= y[i].get(task) ? priors[j] / rate : (1.0 - priors[j]) / (1.0 - rate);
      }
    }
  }
  double total = 0.0;
  for (double x : w) total += x;
  for (double& x : w) x /= total;
  return w;
}

GeneratedCorpus generate(const GenSpec& spec, const RuleSet& rules, const Resources& res) {
  spec.validate();
  if (rules.templates().empty()) throw Error(ErrorCode::InvalidArgument, "rule set has no case templates");
  std::vector<double> weights;
  if (spec.label_priors) {
    weights = raked_weights(rules, *spec.label_priors, res);
  } else {
    for (const auto& t : rules.templates()) weights.push_back(t.weight);
  }
  const std::vector<std::string> names(res.deid_names().begin(), res.deid_names().end());
  const auto vocabulary = res.treatment_labels();

  std::vector<char> uninsured(spec.n, 0);
  const auto n_uninsured = static_cast<std::size_t>(std::llround(spec.uninsured_fraction * static_cast<double>(spec.n)));
  std::fill(uninsured.begin(), uninsured.begin() + static_cast<std::ptrdiff_t>(n_uninsured), 1);
  Rng top(derive_seed(spec.seed, 0xC0FFEEull));
  top.shuffle(uninsured);

  GeneratedCorpus out;
  out.cases.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    Rng pick(derive_seed(spec.seed ^ 0x5EEDull, i));
    const std::size_t t = pick.weighted(weights);
    Draft draft = render_record(rules.templates()[t], i, spec.seed, uninsured[i] != 0, res, names);
    const auto oracle = rule_oracle(draft.record.patient, rules, res);
    OracleEntry entry;
    entry.record_id = draft.record.patient.record_id;
    entry.template_tag = draft.tag;
    entry.rule_id = oracle.rule_id;
    entry.intended_treatment = oracle.treatment;
    entry.intended_labels = oracle.labels;
    entry.recorded_treatment = oracle.treatment;
    if (spec.noise > 0.0 && pick.bernoulli(spec.noise)) {
      std::vector<std::string> others;
      for (const auto& v : vocabulary) {
        if (v != oracle.treatment) others.push_back(v);
      }
      if (!others.empty()) {
        entry.recorded_treatment = pick.pick(others);
        entry.deviated = true;
      }
    }
    draft.record.treatments = {entry.recorded_treatment};
    draft.record.labels = entry.deviated ? labels_of(entry.recorded_treatment, res) : oracle.labels;
    out.cases.push_back(std::move(draft.record));
    out.oracle.push_back(std::move(entry));
  }
  return out;
}

GeneratedCorpus generate(const GenSpec& spec) {
  return generate(spec, RuleSet::by_id(spec.rule_set_id), Resources::bundled());
}

void write_oracle(const std::filesystem::path& path, const std::vector<OracleEntry>& oracle) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& e : oracle) out << json_io::dump(e.to_json()) << '\n';
  if (!out.flush()) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace prx::synth
