#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "prx/ingest.hpp"
#include "prx/json_io.hpp"
#include "prx/text.hpp"
#include "prx/validate.hpp"

namespace prx::ingest {

namespace {

void resegment(PatientRecord& r, const Resources& res) {
  for (auto& n : r.notes) n.sections = segment_note(n.raw_text, res.headers());
}

[[noreturn]] void fail_validation(const ValidationReport& rep) {
  const auto& v = rep.violations.front();
  throw Error(ErrorCode::ValidationFailed, v.path + ": " + v.message, v.path);
}

}  // namespace

Pipeline::Pipeline(PipelineConfig cfg, const Resources& resources)
    : cfg_(std::move(cfg)), resources_(resources), dictionary_(resources.abbreviations()) {}

PatientRecord Pipeline::run(PatientRecord r, NormalizationReport* report) const {
  r = normalize_structured(std::move(r), resources_, report);
  if (auto rep = validate(r); !rep.ok()) fail_validation(rep);
  resegment(r, resources_);
  if (cfg_.expand_abbreviations) {
    for (auto& n : r.notes) n.raw_text = dictionary_.expand(n.raw_text);
    resegment(r, resources_);
  }
  r = deidentify(std::move(r), cfg_.deid, resources_);
  r = temporal_order(std::move(r));
  r = apply_window(std::move(r), cfg_.window);
  return r;
}

CaseRecord Pipeline::run(CaseRecord c, NormalizationReport* report) const {
  try {
    c.patient = run(std::move(c.patient), report);
  } catch (const Error& e) {
    if (e.path().empty()) throw;
    throw Error(e.code(), e.what(), "patient." + e.path());
  }
  if (auto rep = validate(c); !rep.ok()) fail_validation(rep);
  return c;
}

nlohmann::json IngestReport::to_json() const {
  nlohmann::json errs = nlohmann::json::array();
  for (const auto& e : errors) {
    errs.push_back({{"line", e.line},
                    {"code", std::string(prx::to_string(e.code))},
                    {"path", e.path},
                    {"message", e.message}});
  }
  return {{"lines_total", lines_total},
          {"records_ok", records_ok},
          {"errors", errs},
          {"warnings", warnings},
          {"normalization",
           {{"unmapped_labs", normalization.unmapped_labs},
            {"unmapped_medications", normalization.unmapped_medications}}}};
}

IngestResult ingest_jsonl(std::string_view text, const Pipeline& pipeline, unsigned threads) {
  struct Line {
    std::size_t number;
    std::string_view body;
  };
  std::vector<Line> lines;
  std::size_t start = 0, number = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    std::string_view body = text.substr(start, nl == std::string_view::npos ? text.size() - start : nl - start);
    ++number;
    if (!text::trim(body).empty()) lines.push_back({number, body});
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }

  struct Outcome {
    std::optional<CaseRecord> record;
    std::optional<LineError> error;
    NormalizationReport norm;
  };
  std::vector<Outcome> outcomes(lines.size());
  auto work = [&](std::size_t i) {
    Outcome& o = outcomes[i];
    try {
      o.record = pipeline.run(json_io::decode_case(json_io::parse(lines[i].body)), &o.norm);
    } catch (const Error& e) {
      o.error = LineError{lines[i].number, e.code(), e.path(), e.what()};
    } catch (const std::exception& e) {
      o.error = LineError{lines[i].number, ErrorCode::SchemaError, "", e.what()};
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, lines.size())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < lines.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < lines.size();) work(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  IngestResult result;
  result.report.lines_total = lines.size();
  for (auto& o : outcomes) {
    result.report.normalization += o.norm;
    if (o.record) {
      result.cases.push_back(std::move(*o.record));
    } else {
      result.report.errors.push_back(std::move(*o.error));
    }
  }
  result.report.records_ok = result.cases.size();
  if (lines.empty()) result.report.warnings.push_back("empty corpus: no records found");
  return result;
}

IngestResult ingest_corpus(const std::filesystem::path& path, const Pipeline& pipeline,
                           unsigned threads) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open corpus " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IoError, "read failed for " + path.string());
  return ingest_jsonl(ss.str(), pipeline, threads);
}

std::string encode_corpus(const std::vector<CaseRecord>& cases) {
  std::string out;
  for (const auto& c : cases) {
    out += json_io::dump(json_io::encode(c));
    out += '\n';
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, const std::vector<CaseRecord>& cases) {
  const std::string body = encode_corpus(cases);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << body;
    if (!out.flush()) throw Error(ErrorCode::IoError, "write failed for " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::IoError, "cannot replace " + path.string());
  }
}

std::vector<CaseRecord> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open corpus " + path.string());
  std::vector<CaseRecord> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(json_io::decode_case(json_io::parse(line)));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(number) + ": " + e.what(), e.path());
    }
  }
  return out;
}

}  // namespace prx::ingest
