#include "prx/service.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "prx/errors.hpp"
#include "prx/json_io.hpp"
#include "prx/protocol.hpp"
#include "prx/validate.hpp"

namespace prx::service {

using nlohmann::json;

namespace {

[[noreturn]] void bad_config(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::InvalidArgument, "config " + path + ": " + what, path);
}

std::string embedder_flag(const embedding::EmbedderSpec& s) {
  return s.kind == embedding::EmbedderKind::reference_hash ? "reference" : "http:" + s.endpoint;
}

std::string generator_flag(const rag::GeneratorSpec& s) {
  return s.kind == rag::GeneratorKind::stub_majority ? "stub" : "http:" + s.endpoint;
}

json error_body(const Error& e) {
  json err = {{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
  if (!e.path().empty()) err["path"] = e.path();
  return {{"error", err}};
}

json error_body(std::string_view code, const std::string& message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::SchemaError:
    case ErrorCode::ValidationFailed:
    case ErrorCode::MalformedCode:
    case ErrorCode::UnparseableTimestamp:
      return 422;
    case ErrorCode::EmbedServiceError:
    case ErrorCode::GeneratorServiceError:
    case ErrorCode::GeneratorParseError:
      return 502;
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::Internal:
    case ErrorCode::DimensionMismatch:
      return 500;
    default:
      return 400;
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RetrievalConfig retrieval_overrides(const json& body, RetrievalConfig cfg) {
  try {
    if (auto it = body.find("k"); it != body.end()) {
      if (!it->is_number_integer() || it->get<long long>() < 0) {
        throw Error(ErrorCode::InvalidArgument, "k must be a positive integer", "k");
      }
      cfg.k = it->get<std::size_t>();
    }
    if (auto it = body.find("tau"); it != body.end()) {
      if (!it->is_number()) throw Error(ErrorCode::InvalidArgument, "tau must be a number", "tau");
      cfg.tau = it->get<double>();
    }
    if (auto it = body.find("filters"); it != body.end() && !it->is_null()) {
      cfg.filters = json_io::decode_filters(*it, "filters");
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SchemaError) throw Error(ErrorCode::InvalidArgument, e.what(), e.path());
    throw;
  }
  cfg.validate();
  return cfg;
}

}  // namespace

EngineConfig EngineConfig::from_json(const json& j) {
  EngineConfig c;
  if (!j.is_object()) bad_config("engine", "expected an object");
  try {
    const std::size_t dim = j.value("embedder_dim", c.embedder.dim);
    c.embedder = embedding::EmbedderSpec::parse(j.value("embedder", std::string("reference")), dim);
    c.embedder.model_name = j.value("embedder_model", std::string());
    c.generator = rag::GeneratorSpec::parse(j.value("generator", std::string("stub")));
    c.generator.model_name = j.value("generator_model", std::string());
    c.retrieval.k = j.value("k", c.retrieval.k);
    c.retrieval.tau = j.value("tau", c.retrieval.tau);
    if (auto it = j.find("filters"); it != j.end()) c.retrieval.filters = json_io::decode_filters(*it, "filters");
    c.budget = j.value("budget", c.budget);
    c.pipeline.deid.secret_key = j.value("deid_key", c.pipeline.deid.secret_key);
    c.pipeline.deid.date_shift_range_days = j.value("date_shift_range_days", c.pipeline.deid.date_shift_range_days);
    c.pipeline.window.enabled = j.value("window_enabled", c.pipeline.window.enabled);
    c.pipeline.window.window_days = j.value("window_days", c.pipeline.window.window_days);
    const std::string anchor = j.value("window_anchor", std::string("encounter_time"));
    if (anchor == "encounter_time") c.pipeline.window.anchor = ingest::WindowAnchor::encounter_time;
    else if (anchor == "latest_event") c.pipeline.window.anchor = ingest::WindowAnchor::latest_event;
    else bad_config("window_anchor", "expected encounter_time or latest_event");
    c.pipeline.expand_abbreviations = j.value("expand_abbreviations", c.pipeline.expand_abbreviations);
    c.data_dir = j.value("data_dir", std::string());
    c.threads = j.value("threads", 0u);
  } catch (const json::exception& e) {
    bad_config("engine", e.what());
  }
  c.validate();
  return c;
}

json EngineConfig::to_json() const {
  return {{"embedder", embedder_flag(embedder)},
          {"embedder_dim", embedder.dim},
          {"embedder_model", embedder.model_name},
          {"generator", generator_flag(generator)},
          {"generator_model", generator.model_name},
          {"k", retrieval.k},
          {"tau", retrieval.tau},
          {"filters", json_io::encode(retrieval.filters)},
          {"budget", budget},
          {"date_shift_range_days", pipeline.deid.date_shift_range_days},
          {"window_enabled", pipeline.window.enabled},
          {"window_days", pipeline.window.window_days},
          {"window_anchor", pipeline.window.anchor == ingest::WindowAnchor::encounter_time ? "encounter_time" : "latest_event"},
          {"expand_abbreviations", pipeline.expand_abbreviations},
          {"data_dir", data_dir},
          {"threads", threads}};
}

void EngineConfig::validate() const {
  embedder.validate();
  generator.validate();
  retrieval.validate();
  if (budget < rag::kMinPromptBudget) {
    throw Error(ErrorCode::BudgetTooSmall, "budget must be at least " + std::to_string(rag::kMinPromptBudget), "budget");
  }
  if (pipeline.deid.secret_key.empty()) bad_config("deid_key", "must not be empty");
  if (pipeline.deid.date_shift_range_days < 1) bad_config("date_shift_range_days", "must be positive");
  if (pipeline.window.window_days < 1) bad_config("window_days", "must be positive");
}

ServiceConfig ServiceConfig::from_json(const json& j) {
  ServiceConfig c;
  if (!j.is_object()) bad_config("", "expected an object");
  try {
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.index_path = j.value("index_path", std::string());
    c.corpus_path = j.value("corpus_path", std::string());
    c.audit_log_path = j.value("audit_log_path", std::string());
  } catch (const json::exception& e) {
    bad_config("", e.what());
  }
  c.engine = EngineConfig::from_json(j.value("engine", json::object()));
  return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
  return from_json(json_io::parse(read_text(path)));
}

void ServiceConfig::apply_environment() {
  apply_environment([](const char* name) -> const char* { return std::getenv(name); });
}

void ServiceConfig::apply_environment(const std::function<const char*(const char*)>& env) {
  auto str = [&](const char* name, std::string& target) {
    if (const char* v = env(name)) target = v;
  };
  auto num = [&](const char* name, auto& target) {
    const char* v = env(name);
    if (!v) return;
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != std::string_view(v).size()) throw std::invalid_argument(v);
      target = static_cast<std::remove_reference_t<decltype(target)>>(d);
    } catch (const std::exception&) {
      bad_config(name, std::string("not a number: ") + v);
    }
  };
  str("PRECEDENT_RX_HOST", host);
  num("PRECEDENT_RX_PORT", port);
  str("PRECEDENT_RX_INDEX", index_path);
  str("PRECEDENT_RX_CORPUS", corpus_path);
  str("PRECEDENT_RX_AUDIT_LOG", audit_log_path);
  str("PRECEDENT_RX_DATA_DIR", engine.data_dir);
  str("PRECEDENT_RX_DEID_KEY", engine.pipeline.deid.secret_key);
  if (const char* v = env("PRECEDENT_RX_EMBEDDER")) {
    engine.embedder = embedding::EmbedderSpec::parse(v, engine.embedder.dim);
  }
  if (const char* v = env("PRECEDENT_RX_GENERATOR")) engine.generator = rag::GeneratorSpec::parse(v);
  num("PRECEDENT_RX_K", engine.retrieval.k);
  num("PRECEDENT_RX_TAU", engine.retrieval.tau);
  num("PRECEDENT_RX_BUDGET", engine.budget);
  num("PRECEDENT_RX_THREADS", engine.threads);
}

void ServiceConfig::validate() const {
  if (port < 0 || port > 65535) bad_config("port", "must lie in [0, 65535]");
  if (host.empty()) bad_config("host", "must not be empty");
  engine.validate();
}

bool is_safe_case_id(std::string_view id) {
  if (id.empty() || id.size() > 128) return false;
  if (id.find("..") != std::string_view::npos) return false;
  for (char c : id) {
    const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.' || c == ':';
    if (!ok) return false;
  }
  return true;
}

BuiltIndex build_index_from_jsonl(std::string_view jsonl, const EngineConfig& cfg, const Resources& resources) {
  ingest::Pipeline pipeline(cfg.pipeline, resources);
  auto result = ingest::ingest_jsonl(jsonl, pipeline, cfg.threads);
  BuiltIndex out;
  out.report = std::move(result.report);
  if (!out.report.errors.empty() || result.cases.empty()) return out;
  const auto encoder = embedding::make_encoder(cfg.embedder);
  out.index = std::make_shared<const index::Index>(rag::build_case_index(result.cases, *encoder, resources, cfg.threads));
  return out;
}

Service::Service(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.engine.data_dir.empty()) {
    resources_ = std::shared_ptr<const Resources>(&Resources::bundled(), [](const Resources*) {});
  } else {
    resources_ = std::make_shared<const Resources>(Resources::load(cfg_.engine.data_dir));
  }
  encoder_ = embedding::make_encoder(cfg_.engine.embedder);
  generator_ = rag::make_generator(cfg_.engine.generator, *resources_);
  pipeline_ = std::make_shared<const ingest::Pipeline>(cfg_.engine.pipeline, *resources_);
  if (!cfg_.audit_log_path.empty()) audit_ = std::make_shared<rag::FileAuditLog>(cfg_.audit_log_path);
  if (!cfg_.index_path.empty()) {
    publish(std::make_shared<const index::Index>(index::Index::load(cfg_.index_path)));
  } else if (!cfg_.corpus_path.empty()) {
    auto built = build_index_from_jsonl(read_text(cfg_.corpus_path), cfg_.engine, *resources_);
    if (!built.index) {
      throw Error(ErrorCode::ValidationFailed, "corpus " + cfg_.corpus_path + " failed ingest: " +
                                                   json_io::dump(built.report.to_json()));
    }
    publish(built.index);
  }
}

std::uint64_t Service::publish(std::shared_ptr<const index::Index> index) {
  if (!index) throw Error(ErrorCode::InvalidArgument, "cannot publish a null index");
  if (index->dim() != cfg_.engine.embedder.dim) {
    throw Error(ErrorCode::DimensionMismatch, "index dim " + std::to_string(index->dim()) +
                                                  " does not match embedder dim " +
                                                  std::to_string(cfg_.engine.embedder.dim));
  }
  std::lock_guard lock(snapshot_mu_);
  auto next = std::make_shared<Snapshot>();
  next->index = std::move(index);
  next->version = snapshot_ ? snapshot_->version + 1 : 1;
  snapshot_ = next;
  return next->version;
}

std::shared_ptr<const Snapshot> Service::snapshot() const {
  std::lock_guard lock(snapshot_mu_);
  return snapshot_;
}

Response Service::recommend(const json& body) const {
  const auto snap = snapshot();
  if (!snap) return {503, error_body("NoIndex", "no index is loaded")};
  if (!body.is_object()) return {422, error_body("SchemaError", "request body must be a JSON object")};
  const json& pj = body.contains("patient") ? body.at("patient") : body;

  PatientRecord raw;
  try {
    raw = json_io::decode_patient(pj);
  } catch (const Error& e) {
    json b = error_body(e);
    b["violations"] = json::array({{{"path", e.path()}, {"message", e.what()}}});
    return {422, b};
  }
  rag::RecommendOptions opt;
  try {
    opt.retrieval = retrieval_overrides(body, cfg_.engine.retrieval);
    opt.budget = body.value("budget", cfg_.engine.budget);
  } catch (const Error& e) {
    return {400, error_body(e)};
  } catch (const json::exception& e) {
    return {400, error_body("InvalidArgument", e.what())};
  }
  PatientRecord record;
  try {
    record = pipeline_->run(raw);
  } catch (const Error& e) {
    json b = error_body(e);
    json v = json::array();
    for (const auto& x : validate(raw).violations) v.push_back({{"path", x.path}, {"message", x.message}});
    if (v.empty()) v.push_back({{"path", e.path()}, {"message", e.what()}});
    b["violations"] = v;
    return {status_for(e.code()), b};
  }

  opt.clock = clock_;
  opt.audit = audit_.get();
  rag::Engine engine(snap->index, encoder_, generator_, *resources_);
  try {
    const auto res = engine.recommend(record, opt);
    const auto rs = json_io::encode(res.retrieval);
    return {200,
            {{"recommendation", json_io::encode(res.recommendation)},
             {"retrieved_cases", rs.at("cases")},
             {"k", res.retrieval.k},
             {"tau", res.retrieval.tau},
             {"ordering", rs.at("ordering")},
             {"prompt_hash", res.recommendation.prompt_hash},
             {"prompt_tokens", res.prompt.token_count},
             {"index_version", snap->version},
             {"empty_precedent", false}}};
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EmptyPrecedent) {
      return {200,
              {{"recommendation", {{"items", json::array()}, {"prompt_hash", ""}}},
               {"retrieved_cases", json::array()},
               {"k", opt.retrieval.k},
               {"tau", opt.retrieval.tau},
               {"ordering", "similarity"},
               {"prompt_hash", ""},
               {"prompt_tokens", 0},
               {"index_version", snap->version},
               {"empty_precedent", true}}};
    }
    return {status_for(e.code()), error_body(e)};
  }
}

Response Service::get_case(const std::string& id) const {
  if (!is_safe_case_id(id)) return {400, error_body("InvalidArgument", "case id contains disallowed characters")};
  const auto snap = snapshot();
  if (!snap) return {503, error_body("NoIndex", "no index is loaded")};
  const auto* entry = snap->index->find(id);
  if (!entry) return {404, error_body("NotFound", "no case with id " + id)};
  if (entry->case_record) return {200, json_io::encode(*entry->case_record)};
  const auto& m = entry->metadata;
  return {200,
          {{"record_id", entry->record_id},
           {"treatments", m.treatments},
           {"labels", json_io::encode(m.labels)},
           {"diagnoses", m.diagnoses},
           {"encounter_time", m.encounter_time.to_iso()}}};
}

Response Service::reindex(const json& body) {
  std::lock_guard lock(reindex_mu_);
  std::string jsonl;
  try {
    if (body.is_object() && body.contains("jsonl")) {
      jsonl = body.at("jsonl").get<std::string>();
    } else if (body.is_object() && body.contains("corpus_path")) {
      jsonl = read_text(body.at("corpus_path").get<std::string>());
    } else {
      return {400, error_body("InvalidArgument", "body needs corpus_path or jsonl")};
    }
  } catch (const Error& e) {
    return {400, error_body(e)};
  } catch (const json::exception& e) {
    return {400, error_body("InvalidArgument", e.what())};
  }
  BuiltIndex built;
  try {
    built = build_index_from_jsonl(jsonl, cfg_.engine, *resources_);
  } catch (const Error& e) {
    return {status_for(e.code()), error_body(e)};
  }
  if (!built.index) {
    json b = error_body("ValidationFailed", built.report.errors.empty() ? "corpus is empty" : "corpus failed ingest");
    b["report"] = built.report.to_json();
    return {400, b};
  }
  const auto count = built.index->size();
  const auto version = publish(built.index);
  return {200, {{"count", count}, {"index_version", version}, {"report", built.report.to_json()}}};
}

Response Service::evaluate(const json& body, const std::function<void(std::string_view)>& progress) const {
  if (!body.is_object()) return {400, error_body("InvalidArgument", "request body must be a JSON object")};
  eval::ProtocolConfig pc;
  std::vector<CaseRecord> corpus;
  try {
    pc.embedder = cfg_.engine.embedder;
    pc.generator = cfg_.engine.generator;
    pc.retrieval = retrieval_overrides(body, cfg_.engine.retrieval);
    pc.budget = body.value("budget", cfg_.engine.budget);
    pc.threads = cfg_.engine.threads;
    pc.run_baseline = body.value("baseline", true);
    pc.threshold = body.value("threshold", 0.5);
    if (auto it = body.find("embedder"); it != body.end()) {
      pc.embedder = embedding::EmbedderSpec::parse(it->get<std::string>(), body.value("embedder_dim", pc.embedder.dim));
    }
    if (auto it = body.find("generator"); it != body.end()) pc.generator = rag::GeneratorSpec::parse(it->get<std::string>());
    if (auto it = body.find("split"); it != body.end()) {
      const auto& s = *it;
      if (auto f = s.find("fractions"); f != s.end()) {
        if (!f->is_array() || f->size() != 3) throw Error(ErrorCode::InvalidArgument, "fractions needs three values", "split.fractions");
        for (std::size_t i = 0; i < 3; ++i) pc.split.fractions[i] = (*f)[i].get<double>();
      }
      pc.split.seed = s.value("seed", pc.split.seed);
    }
    if (auto it = body.find("ks"); it != body.end()) pc.ks = it->get<std::vector<std::size_t>>();
    pc.split.validate();
    pc.progress = progress;

    if (body.contains("jsonl") || body.contains("corpus_path")) {
      const std::string text = body.contains("jsonl") ? body.at("jsonl").get<std::string>()
                                                      : read_text(body.at("corpus_path").get<std::string>());
      auto result = ingest::ingest_jsonl(text, *pipeline_, cfg_.engine.threads);
      if (!result.report.errors.empty()) {
        json b = error_body("ValidationFailed", "corpus failed ingest");
        b["report"] = result.report.to_json();
        return {400, b};
      }
      corpus = std::move(result.cases);
    } else {
      const auto snap = snapshot();
      if (!snap) return {503, error_body("NoIndex", "no index is loaded and no corpus was given")};
      for (const auto& e : snap->index->entries()) {
        if (!e.case_record) return {400, error_body("InvalidArgument", "loaded index carries no case records; pass a corpus")};
        corpus.push_back(*e.case_record);
      }
    }
  } catch (const Error& e) {
    return {status_for(e.code()), error_body(e)};
  } catch (const json::exception& e) {
    return {400, error_body("InvalidArgument", e.what())};
  }
  try {
    const auto result = eval::run_protocol(corpus, pc, *resources_);
    return {200,
            {{"report", result.report.to_json()},
             {"tables",
              {{"performance.csv", eval::performance_csv(result.report)},
               {"ccr.csv", eval::ccr_csv(result.report)},
               {"retrieval.csv", eval::retrieval_csv(result.report)}}},
             {"train_size", result.train_size},
             {"val_size", result.val_size},
             {"test_size", result.test_size},
             {"empty_precedent", result.empty_precedent}}};
  } catch (const Error& e) {
    return {status_for(e.code()), error_body(e)};
  }
}

Response Service::health() const {
  const auto snap = snapshot();
  if (!snap) return {200, {{"status", "degraded"}, {"index_version", 0}, {"corpus_size", 0}}};
  return {200, {{"status", "ok"}, {"index_version", snap->version}, {"corpus_size", snap->index->size()}}};
}

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(Service& s) : service(s) {}
};

namespace {

void send(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(json_io::dump(r.body) + "\n", "application/json");
}

bool parse_body(const httplib::Request& req, httplib::Response& res, json& out, int status_on_error) {
  try {
    out = json_io::parse(req.body);
    return true;
  } catch (const Error& e) {
    send(res, {status_on_error, error_body(e)});
    return false;
  }
}

}  // namespace

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  Service& svc = service;
  srv.Post("/recommend", [&svc](const httplib::Request& req, httplib::Response& res) {
    json body;
    if (parse_body(req, res, body, 422)) send(res, svc.recommend(body));
  });
  srv.Get(R"(/cases/(.*))", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.get_case(req.matches[1].str()));
  });
  srv.Post("/corpus/reindex", [&svc](const httplib::Request& req, httplib::Response& res) {
    json body;
    if (parse_body(req, res, body, 400)) send(res, svc.reindex(body));
  });
  srv.Post("/evaluate", [&svc](const httplib::Request& req, httplib::Response& res) {
    json body;
    if (!parse_body(req, res, body, 400)) return;
    if (!req.has_param("stream")) {
      send(res, svc.evaluate(body));
      return;
    }
    res.set_chunked_content_provider("application/x-ndjson", [&svc, body](std::size_t, httplib::DataSink& sink) {
      auto emit = [&](const json& j) {
        const std::string line = json_io::dump(j) + "\n";
        sink.write(line.data(), line.size());
      };
      const auto r = svc.evaluate(body, [&](std::string_view msg) { emit({{"progress", msg}}); });
      emit({{"status", r.status}, {"result", r.body}});
      sink.done();
      return true;
    });
  });
  srv.Get("/health", [&svc](const httplib::Request&, httplib::Response& res) { send(res, svc.health()); });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send(res, {status_for(e.code()), error_body(e)});
    } catch (const std::exception& e) {
      send(res, {500, error_body("Internal", e.what())});
    }
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  if (running()) throw Error(ErrorCode::InvalidArgument, "server already running");
  auto& srv = impl_->server;
  int bound = port;
  if (port == 0) {
    bound = srv.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host);
  } else if (!srv.bind_to_port(host, port)) {
    throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->thread = std::thread([&srv] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  return bound;
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

bool HttpServer::running() const { return impl_ && impl_->server.is_running(); }

}  // namespace prx::service
