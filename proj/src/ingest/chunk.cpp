#include <algorithm>
#include <charconv>
#include <map>

#include "prx/ingest.hpp"
#include "prx/text.hpp"

namespace prx::ingest {

namespace {

bool ends_sentence(std::string_view s, const text::Token& t) {
  if (!t.punctuation) return false;
  const char c = s[t.start];
  return c == '.' || c == '!' || c == '?';
}

std::string format_number(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string band(const ObservationEvent& e, const LoincEntry* ref) {
  if (e.code == "72514-3") {
    if (e.value >= 7) return "severe";
    if (e.value >= 4) return "moderate";
    return "mild";
  }
  if (!ref) return "unranged";
  if (e.value < ref->ref_low) return "low";
  if (e.value > ref->ref_high) return "high";
  return "normal";
}

std::string render_observation(const ObservationEvent& e, const Resources& res) {
  const LoincEntry* ref = res.loinc_by_code(e.code);
  const std::string name = ref ? ref->display : e.name;
  if (e.code == "72514-3") return name + " " + format_number(e.value) + "/10 " + band(e, ref);
  std::string s = name + " " + format_number(e.value);
  if (!e.unit.empty()) s += " " + e.unit;
  return s + " " + band(e, ref);
}

std::string decade(int age) {
  if (age < 10) return "under 10";
  return std::to_string(age / 10 * 10) + "s";
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> split_into_chunks(std::string_view s,
                                                                   const ChunkingConfig& cfg) {
  if (cfg.min_tokens == 0 || cfg.max_tokens < cfg.min_tokens) {
    throw Error(ErrorCode::InvalidArgument, "chunk bounds must satisfy 0 < min <= max");
  }
  const auto tokens = text::tokenize(s);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t p = 0;
  const std::size_t n = tokens.size();
  while (p < n) {
    std::size_t cut = n;
    if (n - p > cfg.max_tokens) {
      cut = p + cfg.max_tokens;
      for (std::size_t b = p + cfg.max_tokens; b >= p + cfg.min_tokens; --b) {
        if (ends_sentence(s, tokens[b - 1]) || tokens[b].newline_before) {
          cut = b;
          break;
        }
      }
    }
    out.emplace_back(tokens[p].start, tokens[cut - 1].end);
    p = cut;
  }
  return out;
}

std::string render_demographic_summary(const PatientRecord& r, const Resources& res) {
  const auto& d = r.demographics;
  std::string s = "Patient profile: " + std::string(to_string(d.sex)) + " patient in their " +
                  decade(d.age) + ", " + std::string(to_string(d.housing_status)) + ", " +
                  std::string(to_string(d.insurance_status)) + ".";
  if (!d.race.empty()) s += " Race " + d.race + ".";
  s += " Triage ESI " + std::to_string(r.esi) + ", " + std::to_string(r.comorbidity_count) +
       " comorbidities, " + std::to_string(r.recidivism) + " emergency visits.";
  std::vector<std::string> dx;
  for (const auto& code : r.diagnoses) {
    auto display = res.diagnosis_display(code);
    dx.push_back(display ? *display + " " + code : code);
  }
  s += " Diagnoses: " + (dx.empty() ? std::string("none recorded") : join(dx, "; ")) + ".";
  s += " Allergies: " + (r.allergies.empty() ? std::string("none recorded") : join(r.allergies, ", ")) +
       ".";
  return s;
}

std::vector<Chunk> chunk_record(const PatientRecord& r, const Resources& res,
                                const ChunkingConfig& cfg) {
  std::vector<Chunk> out;
  auto emit = [&](ChunkSource type, std::string detail, Timestamp ts, std::string_view body) {
    for (auto [a, b] : split_into_chunks(body, cfg)) {
      Chunk c;
      c.chunk_id = r.record_id + "#c" + std::to_string(out.size());
      c.source_record = r.record_id;
      c.source_type = type;
      c.source_detail = detail;
      c.timestamp = ts;
      c.text = std::string(body.substr(a, b - a));
      c.token_count = text::count_tokens(c.text);
      out.push_back(std::move(c));
    }
  };

  emit(ChunkSource::demographic_summary, "demographics", r.encounter_time,
       render_demographic_summary(r, res));

  for (const auto& note : r.notes) {
    const auto sections =
        note.sections.empty() ? segment_note(note.raw_text, res.headers()) : note.sections;
    for (const auto& sec : sections) {
      emit(ChunkSource::note_section, note.note_id + "/" + std::string(to_string(sec.label)),
           note.timestamp, sec.text);
    }
  }

  struct Panel {
    std::vector<std::string> items;
    Timestamp latest;
  };
  std::map<std::string, Panel> panels;
  std::map<std::string, const ObservationEvent*> latest_by_code;
  std::vector<std::string> order;
  auto collect = [&](const std::vector<ObservationEvent>& events) {
    for (const auto& e : events) {
      auto [it, fresh] = latest_by_code.try_emplace(e.code, &e);
      if (fresh) {
        order.push_back(e.code);
      } else if (!(e.timestamp < it->second->timestamp)) {
        it->second = &e;
      }
    }
  };
  collect(r.vitals);
  collect(r.labs);
  for (const auto& code : order) {
    const ObservationEvent& e = *latest_by_code[code];
    const std::string name = res.panel_for(e.code).value_or("other observations");
    Panel& p = panels[name];
    p.items.push_back(render_observation(e, res));
    if (p.items.size() == 1 || p.latest < e.timestamp) p.latest = e.timestamp;
  }
  for (auto& [name, p] : panels) {
    std::string body = name;
    body[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(body[0])));
    body += ": " + join(p.items, "; ") + ".";
    emit(ChunkSource::lab_panel, name, p.latest, body);
  }

  if (!r.medications.empty()) {
    std::vector<std::string> meds;
    Timestamp latest = r.medications.front().timestamp;
    for (const auto& m : r.medications) {
      std::string item = m.name;
      if (auto cls = res.drug_class_of(m.name); cls && *cls != m.name) item += " " + *cls;
      item += m.active ? " active" : " historical";
      meds.push_back(std::move(item));
      latest = std::max(latest, m.timestamp);
    }
    emit(ChunkSource::medication_block, "medications", latest, "Medications: " + join(meds, "; ") + ".");
  }
  return out;
}

}  // namespace prx::ingest
