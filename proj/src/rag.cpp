#include "prx/rag.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <thread>

#include "http_clients.hpp"
#include "prx/hashing.hpp"
#include "prx/json_io.hpp"
#include "prx/text.hpp"

namespace prx::rag {

namespace {

std::string join_phrases(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += i + 1 == items.size() ? " and " : ", ";
    out += items[i];
  }
  return out;
}

bool has_gi_bleed(const PatientRecord& r) {
  for (const auto& d : r.diagnoses) {
    if (d.rfind("K92.0", 0) == 0 || d.rfind("K92.1", 0) == 0 || d.rfind("K92.2", 0) == 0) return true;
    if (d.size() >= 3 && d[0] == 'K' && d[1] == '2' && d[2] >= '5' && d[2] <= '8') return true;
  }
  return false;
}

bool has_opioid_use(const PatientRecord& r, const Resources& res) {
  for (const auto& m : r.medications) {
    if (res.drug_class_of(m.name) == std::optional<std::string>("opioid")) return true;
  }
  return false;
}

// First chief-complaint section across notes, whitespace collapsed and the
// closing period removed.
std::string chief_complaint(const PatientRecord& r) {
  for (const auto& n : r.notes) {
    for (const auto& s : n.sections) {
      if (s.label != SectionLabel::chief_complaint || s.text.empty()) continue;
      std::string out;
      bool space = false;
      for (char c : s.text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
          space = !out.empty();
          continue;
        }
        if (space) out.push_back(' ');
        space = false;
        out.push_back(c);
      }
      while (!out.empty() && (out.back() == '.' || out.back() == ' ')) out.pop_back();
      if (!out.empty()) return out;
    }
  }
  return {};
}

bool sentence_end(std::string_view s, const text::Token& t) {
  return t.punctuation && (s[t.start] == '.' || s[t.start] == '!' || s[t.start] == '?');
}

std::string render(const Prompt& p, const RetrievalSet& retrieved) {
  std::string out = "[INSTRUCTION]\n" + p.instruction + "\n[QUERY]\n" + p.query_block + "\n";
  for (const auto& b : p.context_blocks) {
    char head[64];
    std::snprintf(head, sizeof head, "[CASE %d | sim=%.3f]\n", b.case_rank,
                  retrieved.cases[static_cast<std::size_t>(b.case_rank - 1)].similarity);
    out += head;
    out += b.text;
    out += "\n";
  }
  out += "[RESPOND]";
  return out;
}

}  // namespace

std::string Prompt::hash() const { return hashing::sha256_hex(rendered); }

std::string render_patient(const PatientRecord& r, const Resources& res) {
  const auto& d = r.demographics;
  std::string s = std::to_string(d.age) + "-year-old ";
  s += d.sex == Sex::male ? "male" : d.sex == Sex::female ? "female" : "patient";
  std::vector<std::string> dx;
  for (const auto& code : r.diagnoses) dx.push_back(res.diagnosis_display(code).value_or(code));
  if (!dx.empty()) s += " with " + join_phrases(dx);
  if (auto cc = chief_complaint(r); !cc.empty()) s += ", " + cc;
  s += ".";
  const bool gi = has_gi_bleed(r), opioid = has_opioid_use(r, res);
  if (!gi && !opioid) {
    s += " No history of GI bleeding or opioid use.";
  } else if (gi && opioid) {
    s += " History of GI bleeding and opioid use.";
  } else if (gi) {
    s += " History of GI bleeding. No history of opioid use.";
  } else {
    s += " No history of GI bleeding. History of opioid use.";
  }
  if (!r.allergies.empty()) {
    std::string list;
    for (std::size_t i = 0; i < r.allergies.size(); ++i) list += (i ? ", " : "") + r.allergies[i];
    s += " Allergies: " + list + ".";
  }
  return s;
}

std::string treatment_statement(std::string_view treatment, const Resources& res) {
  const TreatmentEntry* e = res.treatment(treatment);
  return "Recommend initiating " + (e ? e->regimen : std::string(treatment)) + ".";
}

std::string render_case(const CaseRecord& c, const Resources& res) {
  std::string s = render_patient(c.patient, res) + "\nTreatments: ";
  bool first = true;
  for (const auto& t : c.treatments) {
    if (!first) s += "; ";
    first = false;
    s += t;
    if (const TreatmentEntry* e = res.treatment(t)) s += " (" + e->regimen + ")";
  }
  return s;
}

Prompt build_prompt(const PatientRecord& record, const RetrievalSet& retrieved, std::size_t budget,
                    const Resources& res) {
  if (budget < kMinPromptBudget) {
    throw Error(ErrorCode::BudgetTooSmall,
                "prompt budget " + std::to_string(budget) + " is below the minimum of " +
                    std::to_string(kMinPromptBudget),
                "budget");
  }
  Prompt p;
  p.budget = budget;
  p.instruction = std::string(kInstruction);
  p.query_block = render_patient(record, res);
  for (std::size_t i = 0; i < retrieved.cases.size(); ++i) {
    const auto& rc = retrieved.cases[i];
    std::string body;
    if (rc.case_record) {
      body = render_case(*rc.case_record, res);
    } else {
      body = "Record " + rc.record_id + ".\nTreatments: ";
      bool first = true;
      for (const auto& t : rc.treatments) {
        body += (first ? "" : "; ") + t;
        first = false;
      }
    }
    p.context_blocks.push_back({static_cast<int>(i + 1), std::move(body)});
  }

  auto finish = [&] {
    p.instruction = std::string(kInstruction);
    if (p.context_blocks.empty()) p.instruction += " " + std::string(kNoPrecedentNote);
    p.rendered = render(p, retrieved);
    p.token_count = text::count_tokens(p.rendered);
  };
  finish();
  while (p.token_count > budget && !p.context_blocks.empty()) {
    p.context_blocks.pop_back();
    finish();
  }
  if (p.token_count > budget) {
    const auto tokens = text::tokenize(p.query_block);
    const std::size_t fixed = p.token_count - tokens.size();
    const std::size_t allowed = budget > fixed ? budget - fixed : 0;
    std::size_t cut = 0;
    for (std::size_t b = std::min(allowed, tokens.size()); b > 0; --b) {
      if (sentence_end(p.query_block, tokens[b - 1])) {
        cut = b;
        break;
      }
    }
    if (cut == 0) cut = std::min(allowed, tokens.size());
    p.query_block = cut == 0 ? std::string() : p.query_block.substr(0, tokens[cut - 1].end);
    finish();
  }
  if (p.token_count > budget) {
    throw Error(ErrorCode::BudgetTooSmall, "prompt scaffolding alone exceeds the budget", "budget");
  }
  return p;
}

std::string_view to_string(GeneratorKind kind) {
  return kind == GeneratorKind::stub_majority ? "stub_majority" : "external_http";
}

void GeneratorSpec::validate() const {
  if (kind == GeneratorKind::external_http && endpoint.empty()) {
    throw Error(ErrorCode::InvalidArgument, "external generator requires an endpoint", "endpoint");
  }
  if (max_output_tokens < 1) {
    throw Error(ErrorCode::InvalidArgument, "max_output_tokens must be positive", "max_output_tokens");
  }
  if (http.max_in_flight < 1 || http.timeout_ms < 1 || http.max_retries < 0 || http.max_retries > 3) {
    throw Error(ErrorCode::InvalidArgument, "invalid generator client options", "http");
  }
}

GeneratorSpec GeneratorSpec::parse(std::string_view flag) {
  GeneratorSpec spec;
  if (flag == "stub" || flag == "stub_majority") {
    spec.kind = GeneratorKind::stub_majority;
  } else if (flag.substr(0, 5) == "http:" && flag.size() > 5) {
    spec.kind = GeneratorKind::external_http;
    spec.endpoint = std::string(flag.substr(5));
  } else {
    throw Error(ErrorCode::InvalidArgument,
                "generator must be 'stub' or 'http:<url>', got '" + std::string(flag) + "'",
                "generator");
  }
  spec.validate();
  return spec;
}

Recommendation StubMajorityGenerator::generate(const Prompt& prompt,
                                               const RetrievalSet& retrieved) const {
  if (retrieved.empty()) {
    throw Error(ErrorCode::EmptyPrecedent, "no precedent cases were retrieved");
  }
  struct Tally {
    std::size_t votes = 0;
    double total_similarity = 0.0;
    std::vector<std::string> cases;
  };
  std::map<std::string, Tally> tally;
  for (const auto& rc : retrieved.cases) {
    for (const auto& t : rc.treatments) {
      auto& e = tally[t];
      ++e.votes;
      e.total_similarity += rc.similarity;
      e.cases.push_back(rc.record_id);
    }
  }
  std::vector<std::pair<std::string, Tally>> ranked(tally.begin(), tally.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.votes != b.second.votes) return a.second.votes > b.second.votes;
    if (a.second.total_similarity != b.second.total_similarity) {
      return a.second.total_similarity > b.second.total_similarity;
    }
    return a.first < b.first;
  });
  const double k = static_cast<double>(retrieved.k > 0 ? retrieved.k : retrieved.cases.size());
  Recommendation rec;
  rec.prompt_hash = prompt.hash();
  for (auto& [t, e] : ranked) {
    RecommendationItem item;
    item.treatment = t;
    item.confidence = std::min(1.0, static_cast<double>(e.votes) / k);
    item.supporting_case_ids = std::move(e.cases);
    item.rationale = treatment_statement(t, resources_);
    rec.items.push_back(std::move(item));
  }
  return rec;
}

std::unique_ptr<Generator> make_generator(const GeneratorSpec& spec, const Resources& resources) {
  spec.validate();
  if (spec.kind == GeneratorKind::stub_majority) return std::make_unique<StubMajorityGenerator>(resources);
  return detail::make_http_generator(spec);
}

Recommendation generate(const GeneratorSpec& spec, const Prompt& prompt, const RetrievalSet& retrieved,
                        const Resources& resources) {
  return make_generator(spec, resources)->generate(prompt, retrieved);
}

Recommendation parse_generator_output(std::string_view raw, const RetrievalSet& retrieved,
                                      std::string prompt_hash) {
  Recommendation rec;
  rec.prompt_hash = std::move(prompt_hash);
  std::set<std::string> seen;
  for (const auto& line_raw : text::split(raw, '\n')) {
    std::string line = text::trim(line_raw);
    if (line.size() < 2 || (line[0] != '-' && line[0] != '*') || line[1] != ' ') continue;
    line = text::trim(std::string_view(line).substr(2));
    std::vector<std::string> refs;
    if (!line.empty() && line.back() == ']') {
      const std::size_t open = line.rfind('[');
      if (open != std::string::npos) {
        for (auto& part : text::split(std::string_view(line).substr(open + 1, line.size() - open - 2), ',')) {
          std::string ref = text::to_lower_ascii(text::trim(part));
          if (ref.rfind("case", 0) == 0) ref = text::trim(std::string_view(ref).substr(4));
          if (!ref.empty() && std::all_of(ref.begin(), ref.end(), ::isdigit) && ref.size() < 6) {
            const std::size_t rank = std::stoul(ref);
            if (rank >= 1 && rank <= retrieved.cases.size()) {
              const std::string& id = retrieved.cases[rank - 1].record_id;
              if (std::find(refs.begin(), refs.end(), id) == refs.end()) refs.push_back(id);
            }
          }
        }
        line = text::trim(std::string_view(line).substr(0, open));
      }
    }
    if (line.empty() || !seen.insert(line).second) continue;
    RecommendationItem item;
    item.treatment = line;
    item.supporting_case_ids = std::move(refs);
    item.confidence = 1.0 / static_cast<double>(rec.items.size() + 1);
    rec.items.push_back(std::move(item));
  }
  if (rec.items.empty()) {
    throw Error(ErrorCode::GeneratorParseError,
                "generator output has no '- <treatment> [Case i]' lines; raw text: " + std::string(raw));
  }
  return rec;
}

double task_score(const Recommendation& rec, Task task, const Resources& resources) {
  double num = 0.0, den = 0.0;
  for (const auto& item : rec.items) {
    den += item.confidence;
    if (const TreatmentEntry* e = resources.treatment(item.treatment); e && e->labels.get(task)) {
      num += item.confidence;
    }
  }
  return den > 0.0 ? num / den : 0.0;
}

nlohmann::json AuditRecord::to_json() const {
  return {{"ts", ts.to_iso()},
          {"record_id", record_id},
          {"prompt_hash", prompt_hash},
          {"k", k},
          {"tau", tau},
          {"retrieved_ids", retrieved_ids},
          {"generator_kind", std::string(to_string(generator_kind))}};
}

FileAuditLog::FileAuditLog(std::filesystem::path path) : path_(std::move(path)) {
  std::ofstream probe(path_, std::ios::app);
  if (!probe) throw Error(ErrorCode::IoError, "cannot open audit log " + path_.string());
}

void FileAuditLog::append(const std::string& line) {
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  out << line << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "audit log write failed: " + path_.string());
}

void MemoryAuditLog::append(const std::string& line) {
  std::lock_guard lock(mu_);
  lines_.push_back(line);
}

std::vector<std::string> MemoryAuditLog::lines() const {
  std::lock_guard lock(mu_);
  return lines_;
}

Timestamp system_now() {
  return {std::chrono::duration_cast<std::chrono::seconds>(
              std::chrono::system_clock::now().time_since_epoch())
              .count()};
}

Engine::Engine(std::shared_ptr<const index::Index> idx, std::shared_ptr<const embedding::Encoder> encoder,
               std::shared_ptr<const Generator> generator, const Resources& resources)
    : index_(std::move(idx)),
      encoder_(std::move(encoder)),
      generator_(std::move(generator)),
      resources_(resources) {
  if (!index_ || !encoder_ || !generator_) throw Error(ErrorCode::InvalidArgument, "engine parts missing");
  if (index_->dim() != encoder_->dim()) {
    throw Error(ErrorCode::DimensionMismatch, "encoder dim " + std::to_string(encoder_->dim()) +
                                                  " does not match index dim " +
                                                  std::to_string(index_->dim()));
  }
}

RecommendResult Engine::recommend(const PatientRecord& record, const RecommendOptions& opt) const {
  opt.retrieval.validate();
  if (opt.budget < kMinPromptBudget) {
    throw Error(ErrorCode::BudgetTooSmall, "prompt budget " + std::to_string(opt.budget) +
                                               " is below the minimum of " +
                                               std::to_string(kMinPromptBudget),
                "budget");
  }
  RecommendResult out;
  const auto embedded = embedding::embed_record(record, *encoder_, resources_);
  out.query_embedding = embedded.case_embedding;

  const auto& cfg = opt.retrieval;
  if (cfg.filters.empty()) {
    out.retrieval = index_->search(out.query_embedding, cfg);
  } else {
    RetrievalConfig wide = cfg;
    wide.k = std::max<std::size_t>(1, index_->size());
    index::QueryMetadata meta{{record.diagnoses.begin(), record.diagnoses.end()}, record.encounter_time};
    out.retrieval = index_->filter_rerank(index_->search(out.query_embedding, wide), meta, cfg.filters);
    if (out.retrieval.cases.size() > cfg.k) out.retrieval.cases.resize(cfg.k);
    out.retrieval.k = cfg.k;
  }
  index_->attach_profile_similarity(out.retrieval, embedding::profile_embedding(embedded));

  out.prompt = build_prompt(record, out.retrieval, opt.budget, resources_);

  AuditRecord audit;
  audit.ts = opt.clock ? opt.clock() : system_now();
  audit.record_id = record.record_id;
  audit.prompt_hash = out.prompt.hash();
  audit.k = cfg.k;
  audit.tau = cfg.tau;
  for (const auto& c : out.retrieval.cases) audit.retrieved_ids.push_back(c.record_id);
  audit.generator_kind = generator_->kind();
  out.audit_line = json_io::dump(audit.to_json());
  if (opt.audit) opt.audit->append(out.audit_line);

  out.recommendation = generator_->generate(out.prompt, out.retrieval);
  out.recommendation.prompt_hash = audit.prompt_hash;
  return out;
}

RecommendResult recommend(const PatientRecord& record, std::shared_ptr<const index::Index> idx,
                          const embedding::EmbedderSpec& embedder, const GeneratorSpec& generator,
                          const RetrievalConfig& cfg, std::size_t budget) {
  Engine engine(std::move(idx), embedding::make_encoder(embedder), make_generator(generator));
  RecommendOptions opt;
  opt.retrieval = cfg;
  opt.budget = budget;
  return engine.recommend(record, opt);
}

std::vector<index::IndexEntry> make_entries(const std::vector<CaseRecord>& cases,
                                            const embedding::Encoder& encoder, const Resources& res,
                                            unsigned threads) {
  std::vector<index::IndexEntry> entries(cases.size());
  auto work = [&](std::size_t i) {
    const CaseRecord& c = cases[i];
    auto embedded = embedding::embed_record(c.patient, encoder, res);
    index::IndexEntry& e = entries[i];
    e.record_id = c.patient.record_id;
    e.case_embedding = embedded.case_embedding;
    e.profile_embedding = embedding::profile_embedding(embedded);
    for (auto& ch : embedded.chunks) e.chunk_embeddings.push_back({ch.chunk.chunk_id, std::move(ch.embedding)});
    e.metadata.diagnoses = {c.patient.diagnoses.begin(), c.patient.diagnoses.end()};
    e.metadata.encounter_time = c.patient.encounter_time;
    e.metadata.treatments = c.treatments;
    e.metadata.labels = c.labels;
    for (const auto& t : c.treatments) {
      if (const TreatmentEntry* te = res.treatment(t)) e.metadata.medication_classes.insert(te->drug_class);
    }
    e.case_record = std::make_shared<const CaseRecord>(c);
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  if (threads <= 1 || cases.size() < 2) {
    for (std::size_t i = 0; i < cases.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex mu;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < cases.size();) {
          try {
            work(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  return entries;
}

index::Index build_case_index(const std::vector<CaseRecord>& cases, const embedding::Encoder& encoder,
                              const Resources& resources, unsigned threads) {
  return index::Index::build(make_entries(cases, encoder, resources, threads), encoder.dim());
}

}  // namespace prx::rag
