#include "prx/json_io.hpp"

#include <cmath>

#include "prx/errors.hpp"

namespace prx::json_io {

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string index_path(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::SchemaError, (path.empty() ? std::string("record") : path) + ": " + what,
              path);
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) schema_error(path, "expected an object");
}

const json* field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return nullptr;
  return &*it;
}

const json& required(const json& j, const char* key, const std::string& path) {
  const json* f = field(j, key);
  if (!f) schema_error(join(path, key), "required field missing");
  return *f;
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) schema_error(path, "expected a string");
  return j.get<std::string>();
}

std::int64_t as_int(const json& j, const std::string& path) {
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) {
    double d = j.get<double>();
    if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 9e15) {
      return static_cast<std::int64_t>(d);
    }
  }
  schema_error(path, "expected an integer");
}

int as_small_int(const json& j, const std::string& path) {
  std::int64_t v = as_int(j, path);
  if (v < -1000000000 || v > 1000000000) schema_error(path, "integer out of range");
  return static_cast<int>(v);
}

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) schema_error(path, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) schema_error(path, "expected a finite number");
  return v;
}

bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) schema_error(path, "expected a boolean");
  return j.get<bool>();
}

const json& as_array(const json& j, const std::string& path) {
  if (!j.is_array()) schema_error(path, "expected an array");
  return j;
}

Timestamp as_timestamp(const json& j, const std::string& path) {
  std::string s = as_string(j, path);
  try {
    return Timestamp::parse(s);
  } catch (const Error& e) {
    throw Error(ErrorCode::UnparseableTimestamp, path + ": " + e.what(), path);
  }
}

std::vector<std::string> string_list(const json& j, const char* key, const std::string& path) {
  std::vector<std::string> out;
  if (const json* f = field(j, key)) {
    const std::string p = join(path, key);
    as_array(*f, p);
    for (std::size_t i = 0; i < f->size(); ++i) out.push_back(as_string((*f)[i], index_path(p, i)));
  }
  return out;
}

template <class E, class F>
E as_enum(const json& j, const std::string& path, F parse_fn, const char* allowed) {
  auto v = parse_fn(as_string(j, path));
  if (!v) schema_error(path, std::string("expected one of ") + allowed);
  return *v;
}

Demographics decode_demographics(const json& j, const std::string& path) {
  require_object(j, path);
  Demographics d;
  d.age = as_small_int(required(j, "age", path), join(path, "age"));
  d.sex = as_enum<Sex>(required(j, "sex", path), join(path, "sex"), parse_sex,
                       "male, female, other");
  if (const json* f = field(j, "race")) d.race = as_string(*f, join(path, "race"));
  if (const json* f = field(j, "housing_status")) {
    d.housing_status = as_enum<HousingStatus>(*f, join(path, "housing_status"), parse_housing,
                                              "housed, homeless, unknown");
  }
  if (const json* f = field(j, "insurance_status")) {
    d.insurance_status = as_enum<InsuranceStatus>(*f, join(path, "insurance_status"),
                                                  parse_insurance, "insured, uninsured, unknown");
  }
  return d;
}

ObservationEvent decode_observation(const json& j, const std::string& path) {
  require_object(j, path);
  ObservationEvent e;
  if (const json* f = field(j, "code")) e.code = as_string(*f, join(path, "code"));
  if (const json* f = field(j, "name")) e.name = as_string(*f, join(path, "name"));
  if (e.code.empty() && e.name.empty()) schema_error(join(path, "name"), "code or name required");
  e.value = as_number(required(j, "value", path), join(path, "value"));
  if (const json* f = field(j, "unit")) e.unit = as_string(*f, join(path, "unit"));
  e.timestamp = as_timestamp(required(j, "timestamp", path), join(path, "timestamp"));
  return e;
}

MedicationEvent decode_medication(const json& j, const std::string& path) {
  require_object(j, path);
  MedicationEvent m;
  m.name = as_string(required(j, "name", path), join(path, "name"));
  if (const json* f = field(j, "code")) m.code = as_string(*f, join(path, "code"));
  if (const json* f = field(j, "active")) m.active = as_bool(*f, join(path, "active"));
  m.timestamp = as_timestamp(required(j, "timestamp", path), join(path, "timestamp"));
  return m;
}

NoteSection decode_section(const json& j, const std::string& path) {
  require_object(j, path);
  NoteSection s;
  s.label = as_enum<SectionLabel>(required(j, "label", path), join(path, "label"),
                                  parse_section_label,
                                  "chief_complaint, hpi, assessment, plan, other");
  if (const json* f = field(j, "header")) s.header = as_string(*f, join(path, "header"));
  s.text = as_string(required(j, "text", path), join(path, "text"));
  const json& span = as_array(required(j, "span", path), join(path, "span"));
  if (span.size() != 2) schema_error(join(path, "span"), "expected [start, end]");
  std::int64_t a = as_int(span[0], join(path, "span") + "[0]");
  std::int64_t b = as_int(span[1], join(path, "span") + "[1]");
  if (a < 0 || b < 0) schema_error(join(path, "span"), "offsets must be non-negative");
  s.start = static_cast<std::size_t>(a);
  s.end = static_cast<std::size_t>(b);
  return s;
}

ClinicalNote decode_note(const json& j, const std::string& path) {
  require_object(j, path);
  ClinicalNote n;
  n.note_id = as_string(required(j, "note_id", path), join(path, "note_id"));
  if (const json* f = field(j, "note_type")) {
    n.note_type = as_enum<NoteType>(*f, join(path, "note_type"), parse_note_type,
                                    "progress, discharge_summary, hpi, consult, other");
  }
  n.timestamp = as_timestamp(required(j, "timestamp", path), join(path, "timestamp"));
  n.raw_text = as_string(required(j, "raw_text", path), join(path, "raw_text"));
  if (const json* f = field(j, "sections")) {
    const std::string p = join(path, "sections");
    as_array(*f, p);
    for (std::size_t i = 0; i < f->size(); ++i) {
      n.sections.push_back(decode_section((*f)[i], index_path(p, i)));
    }
  }
  return n;
}

template <class T, class F>
std::vector<T> object_list(const json& j, const char* key, const std::string& path, F decode) {
  std::vector<T> out;
  if (const json* f = field(j, key)) {
    const std::string p = join(path, key);
    as_array(*f, p);
    for (std::size_t i = 0; i < f->size(); ++i) out.push_back(decode((*f)[i], index_path(p, i)));
  }
  return out;
}

Timestamp latest_event(const PatientRecord& r) {
  std::optional<Timestamp> best;
  auto see = [&](Timestamp t) {
    if (!best || t > *best) best = t;
  };
  for (auto& e : r.vitals) see(e.timestamp);
  for (auto& e : r.labs) see(e.timestamp);
  for (auto& m : r.medications) see(m.timestamp);
  for (auto& n : r.notes) see(n.timestamp);
  return best.value_or(Timestamp{});
}

}  // namespace

json encode(const Demographics& v) {
  return {{"age", v.age},
          {"sex", to_string(v.sex)},
          {"race", v.race},
          {"housing_status", to_string(v.housing_status)},
          {"insurance_status", to_string(v.insurance_status)}};
}

json encode(const ObservationEvent& v) {
  return {{"code", v.code},
          {"name", v.name},
          {"value", v.value},
          {"unit", v.unit},
          {"timestamp", v.timestamp.to_iso()}};
}

json encode(const MedicationEvent& v) {
  return {{"name", v.name},
          {"code", v.code},
          {"active", v.active},
          {"timestamp", v.timestamp.to_iso()}};
}

json encode(const NoteSection& v) {
  return {{"label", to_string(v.label)},
          {"header", v.header},
          {"text", v.text},
          {"span", json::array({v.start, v.end})}};
}

json encode(const ClinicalNote& v) {
  json sections = json::array();
  for (auto& s : v.sections) sections.push_back(encode(s));
  return {{"note_id", v.note_id},
          {"note_type", to_string(v.note_type)},
          {"timestamp", v.timestamp.to_iso()},
          {"raw_text", v.raw_text},
          {"sections", sections}};
}

json encode(const PatientRecord& v) {
  json vitals = json::array(), labs = json::array(), meds = json::array(), notes = json::array();
  for (auto& e : v.vitals) vitals.push_back(encode(e));
  for (auto& e : v.labs) labs.push_back(encode(e));
  for (auto& m : v.medications) meds.push_back(encode(m));
  for (auto& n : v.notes) notes.push_back(encode(n));
  return {{"record_id", v.record_id},
          {"encounter_time", v.encounter_time.to_iso()},
          {"demographics", encode(v.demographics)},
          {"vitals", vitals},
          {"labs", labs},
          {"diagnoses", v.diagnoses},
          {"medications", meds},
          {"allergies", v.allergies},
          {"comorbidity_count", v.comorbidity_count},
          {"esi", v.esi},
          {"recidivism", v.recidivism},
          {"notes", notes},
          {"deidentified", v.deidentified}};
}

json encode(const OutcomeLabels& v) {
  return {{"non_opioid", v.non_opioid},
          {"opioid_any", v.opioid_any},
          {"opioid_standard_dose", v.opioid_standard_dose}};
}

json encode(const CaseRecord& v) {
  return {{"patient", encode(v.patient)},
          {"treatments", v.treatments},
          {"labels", encode(v.labels)}};
}

json encode(const Chunk& v) {
  return {{"chunk_id", v.chunk_id},
          {"source_record", v.source_record},
          {"source_type", to_string(v.source_type)},
          {"source_detail", v.source_detail},
          {"timestamp", v.timestamp.to_iso()},
          {"text", v.text},
          {"token_count", v.token_count}};
}

json encode(const RetrievalFilters& v) {
  json j = json::object();
  if (v.diagnosis_overlap_min) j["diagnosis_overlap_min"] = *v.diagnosis_overlap_min;
  if (v.recency_window_days) j["recency_window_days"] = *v.recency_window_days;
  if (v.medication_class) j["medication_class"] = *v.medication_class;
  return j;
}

json encode(const RetrievedCase& v) {
  json chunks = json::array();
  for (auto& m : v.matched_chunks) {
    chunks.push_back({{"chunk_id", m.chunk_id}, {"similarity", m.similarity}});
  }
  json j = {{"record_id", v.record_id},
            {"treatments", v.treatments},
            {"labels", encode(v.labels)},
            {"similarity", v.similarity},
            {"rank", v.rank},
            {"matched_chunks", chunks}};
  if (v.profile_similarity) j["profile_similarity"] = *v.profile_similarity;
  return j;
}

json encode(const RetrievalSet& v) {
  json cases = json::array();
  for (auto& c : v.cases) cases.push_back(encode(c));
  return {{"cases", cases},
          {"k", v.k},
          {"tau", v.tau},
          {"ordering", v.ordering == RankingKey::similarity ? "similarity"
                                                            : "overlap_similarity_recency"}};
}

json encode(const Recommendation& v) {
  json items = json::array();
  for (auto& it : v.items) {
    json j = {{"treatment", it.treatment},
              {"confidence", it.confidence},
              {"supporting_case_ids", it.supporting_case_ids}};
    if (it.rationale) j["rationale"] = *it.rationale;
    items.push_back(std::move(j));
  }
  return {{"items", items}, {"prompt_hash", v.prompt_hash}};
}

PatientRecord decode_patient(const json& j, const std::string& path) {
  require_object(j, path);
  PatientRecord r;
  r.record_id = as_string(required(j, "record_id", path), join(path, "record_id"));
  r.demographics = decode_demographics(required(j, "demographics", path), join(path, "demographics"));
  r.vitals = object_list<ObservationEvent>(j, "vitals", path, decode_observation);
  r.labs = object_list<ObservationEvent>(j, "labs", path, decode_observation);
  r.diagnoses = string_list(j, "diagnoses", path);
  r.medications = object_list<MedicationEvent>(j, "medications", path, decode_medication);
  r.allergies = string_list(j, "allergies", path);
  if (const json* f = field(j, "comorbidity_count")) {
    r.comorbidity_count = as_small_int(*f, join(path, "comorbidity_count"));
  }
  if (const json* f = field(j, "esi")) r.esi = as_small_int(*f, join(path, "esi"));
  if (const json* f = field(j, "recidivism")) {
    r.recidivism = as_small_int(*f, join(path, "recidivism"));
  }
  r.notes = object_list<ClinicalNote>(j, "notes", path, decode_note);
  if (const json* f = field(j, "deidentified")) {
    r.deidentified = as_bool(*f, join(path, "deidentified"));
  }
  if (const json* f = field(j, "encounter_time")) {
    r.encounter_time = as_timestamp(*f, join(path, "encounter_time"));
  } else {
    r.encounter_time = latest_event(r);
  }
  return r;
}

OutcomeLabels decode_labels(const json& j, const std::string& path) {
  require_object(j, path);
  OutcomeLabels l;
  l.non_opioid = as_bool(required(j, "non_opioid", path), join(path, "non_opioid"));
  l.opioid_any = as_bool(required(j, "opioid_any", path), join(path, "opioid_any"));
  l.opioid_standard_dose =
      as_bool(required(j, "opioid_standard_dose", path), join(path, "opioid_standard_dose"));
  return l;
}

CaseRecord decode_case(const json& j, const std::string& path) {
  require_object(j, path);
  CaseRecord c;
  c.patient = decode_patient(required(j, "patient", path), join(path, "patient"));
  for (auto& t : string_list(j, "treatments", path)) c.treatments.insert(t);
  c.labels = decode_labels(required(j, "labels", path), join(path, "labels"));
  return c;
}

RetrievalFilters decode_filters(const json& j, const std::string& path) {
  require_object(j, path);
  RetrievalFilters f;
  if (const json* v = field(j, "diagnosis_overlap_min")) {
    f.diagnosis_overlap_min = as_small_int(*v, join(path, "diagnosis_overlap_min"));
  }
  if (const json* v = field(j, "recency_window_days")) {
    f.recency_window_days = as_small_int(*v, join(path, "recency_window_days"));
  }
  if (const json* v = field(j, "medication_class")) {
    f.medication_class = as_string(*v, join(path, "medication_class"));
  }
  return f;
}

RetrievedCase decode_retrieved_case(const json& j, const std::string& path) {
  require_object(j, path);
  RetrievedCase c;
  c.record_id = as_string(required(j, "record_id", path), join(path, "record_id"));
  for (auto& t : string_list(j, "treatments", path)) c.treatments.insert(t);
  if (const json* f = field(j, "labels")) c.labels = decode_labels(*f, join(path, "labels"));
  c.similarity = as_number(required(j, "similarity", path), join(path, "similarity"));
  if (const json* f = field(j, "profile_similarity")) {
    c.profile_similarity = as_number(*f, join(path, "profile_similarity"));
  }
  if (const json* f = field(j, "rank")) c.rank = as_small_int(*f, join(path, "rank"));
  if (const json* f = field(j, "matched_chunks")) {
    const std::string p = join(path, "matched_chunks");
    as_array(*f, p);
    for (std::size_t i = 0; i < f->size(); ++i) {
      const std::string ip = index_path(p, i);
      require_object((*f)[i], ip);
      c.matched_chunks.push_back(
          {as_string(required((*f)[i], "chunk_id", ip), join(ip, "chunk_id")),
           as_number(required((*f)[i], "similarity", ip), join(ip, "similarity"))});
    }
  }
  return c;
}

RetrievalSet decode_retrieval_set(const json& j, const std::string& path) {
  require_object(j, path);
  RetrievalSet s;
  s.cases = object_list<RetrievedCase>(j, "cases", path, decode_retrieved_case);
  if (const json* f = field(j, "k")) {
    auto k = as_int(*f, join(path, "k"));
    if (k < 0) schema_error(join(path, "k"), "must be non-negative");
    s.k = static_cast<std::size_t>(k);
  } else {
    s.k = s.cases.size();
  }
  if (const json* f = field(j, "tau")) s.tau = as_number(*f, join(path, "tau"));
  if (const json* f = field(j, "ordering")) {
    std::string o = as_string(*f, join(path, "ordering"));
    if (o == "similarity") {
      s.ordering = RankingKey::similarity;
    } else if (o == "overlap_similarity_recency") {
      s.ordering = RankingKey::overlap_similarity_recency;
    } else {
      schema_error(join(path, "ordering"), "unknown ordering");
    }
  }
  return s;
}

Recommendation decode_recommendation(const json& j, const std::string& path) {
  require_object(j, path);
  Recommendation r;
  r.items = object_list<RecommendationItem>(
      j, "items", path, [](const json& it, const std::string& p) {
        require_object(it, p);
        RecommendationItem item;
        item.treatment = as_string(required(it, "treatment", p), join(p, "treatment"));
        item.confidence = as_number(required(it, "confidence", p), join(p, "confidence"));
        item.supporting_case_ids = string_list(it, "supporting_case_ids", p);
        if (const json* f = field(it, "rationale")) item.rationale = as_string(*f, join(p, "rationale"));
        return item;
      });
  if (const json* f = field(j, "prompt_hash")) r.prompt_hash = as_string(*f, join(path, "prompt_hash"));
  return r;
}

json parse(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaError, std::string("malformed JSON: ") + e.what());
  }
}

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

}  // namespace prx::json_io
