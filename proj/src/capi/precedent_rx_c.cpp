#include "precedent_rx.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "prx/errors.hpp"
#include "prx/evaluation.hpp"
#include "prx/ingest.hpp"
#include "prx/json_io.hpp"
#include "prx/service.hpp"
#include "prx/synth.hpp"

struct prx_service {
  std::unique_ptr<prx::service::Service> impl;
};

struct prx_server {
  std::unique_ptr<prx::service::HttpServer> impl;
};

namespace {

using nlohmann::json;

thread_local std::string g_error;
thread_local std::string g_error_path;

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p) std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void set_out(char** out, const std::string& s) {
  if (out) *out = dup(s);
}

prx_status status_of(prx::ErrorCode code) {
  return static_cast<prx_status>(static_cast<int>(code) + 1);
}

template <class F>
prx_status guarded(F&& f) {
  g_error.clear();
  g_error_path.clear();
  try {
    return f();
  } catch (const prx::Error& e) {
    g_error = e.what();
    g_error_path = e.path();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_error = "out of memory";
    return PRX_E_INTERNAL;
  } catch (const std::exception& e) {
    g_error = e.what();
    return PRX_E_INTERNAL;
  }
}

prx::service::ServiceConfig config_from(const char* config_json, bool apply_env) {
  prx::service::ServiceConfig cfg;
  if (config_json && *config_json) cfg = prx::service::ServiceConfig::from_json(prx::json_io::parse(config_json));
  if (apply_env) cfg.apply_environment();
  cfg.validate();
  return cfg;
}

std::string read_text(const char* path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw prx::Error(prx::ErrorCode::IoError, std::string("cannot read ") + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw prx::Error(prx::ErrorCode::IoError, "cannot write " + path.string());
    out << text;
    if (!out.flush()) throw prx::Error(prx::ErrorCode::IoError, "write failed for " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw prx::Error(prx::ErrorCode::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

void require(const void* p, const char* name) {
  if (!p) throw prx::Error(prx::ErrorCode::InvalidArgument, std::string(name) + " must not be NULL", name);
}

}  // namespace

extern "C" {

const char* prx_version(void) { return "0.1.0"; }

const char* prx_status_name(prx_status status) {
  if (status == PRX_OK) return "OK";
  const int v = static_cast<int>(status) - 1;
  if (v < 0 || v > static_cast<int>(prx::ErrorCode::Internal)) return "Unknown";
  return prx::to_string(static_cast<prx::ErrorCode>(v)).data();
}

const char* prx_last_error(void) { return g_error.c_str(); }
const char* prx_last_error_path(void) { return g_error_path.c_str(); }

void prx_string_free(char* s) { std::free(s); }

prx_status prx_service_open(const char* config_json, int apply_env, prx_service** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    auto svc = std::make_unique<prx_service>();
    svc->impl = std::make_unique<prx::service::Service>(config_from(config_json, apply_env != 0));
    *out = svc.release();
    return PRX_OK;
  });
}

void prx_service_close(prx_service* service) { delete service; }

prx_status prx_service_call(prx_service* service, const char* endpoint, const char* body, int* http_status,
                            char** response_json) {
  return guarded([&] {
    require(service, "service");
    require(endpoint, "endpoint");
    const std::string ep = endpoint;
    const std::string text = body ? body : "";
    auto& svc = *service->impl;
    prx::service::Response r;
    auto parse = [&](int status_on_error) -> std::optional<json> {
      try {
        return prx::json_io::parse(text.empty() ? "{}" : text);
      } catch (const prx::Error& e) {
        r = {status_on_error, {{"error", {{"code", "SchemaError"}, {"message", e.what()}}}}};
        return std::nullopt;
      }
    };
    if (ep == "recommend") {
      if (auto j = parse(422)) r = svc.recommend(*j);
    } else if (ep == "case") {
      r = svc.get_case(text);
    } else if (ep == "reindex") {
      if (auto j = parse(400)) r = svc.reindex(*j);
    } else if (ep == "evaluate") {
      if (auto j = parse(400)) r = svc.evaluate(*j);
    } else if (ep == "health") {
      r = svc.health();
    } else {
      throw prx::Error(prx::ErrorCode::InvalidArgument, "unknown endpoint '" + ep + "'", "endpoint");
    }
    if (http_status) *http_status = r.status;
    set_out(response_json, prx::json_io::dump(r.body) + "\n");
    return PRX_OK;
  });
}

prx_status prx_server_start(prx_service* service, const char* host, int port, prx_server** out, int* bound_port) {
  return guarded([&] {
    require(service, "service");
    require(out, "out");
    *out = nullptr;
    auto srv = std::make_unique<prx_server>();
    srv->impl = std::make_unique<prx::service::HttpServer>(*service->impl);
    const int p = srv->impl->start(host ? host : service->impl->config().host, port);
    if (bound_port) *bound_port = p;
    *out = srv.release();
    return PRX_OK;
  });
}

void prx_server_stop(prx_server* server) {
  if (!server) return;
  server->impl->stop();
  delete server;
}

prx_status prx_ingest(const char* config_json, const char* corpus_path, const char* out_path, char** report_json) {
  return guarded([&] {
    require(corpus_path, "corpus_path");
    require(out_path, "out_path");
    const auto cfg = config_from(config_json, false);
    const prx::Resources res = cfg.engine.data_dir.empty() ? prx::Resources::bundled()
                                                           : prx::Resources::load(cfg.engine.data_dir);
    prx::ingest::Pipeline pipeline(cfg.engine.pipeline, res);
    auto result = prx::ingest::ingest_jsonl(read_text(corpus_path), pipeline, cfg.engine.threads);
    set_out(report_json, prx::json_io::dump(result.report.to_json()) + "\n");
    if (!result.report.errors.empty()) {
      g_error = std::to_string(result.report.errors.size()) + " line(s) failed ingest";
      return PRX_E_VALIDATION;
    }
    prx::ingest::write_corpus(out_path, result.cases);
    return PRX_OK;
  });
}

prx_status prx_index_build(const char* config_json, const char* corpus_path, const char* index_path,
                           char** summary_json) {
  return guarded([&] {
    require(corpus_path, "corpus_path");
    require(index_path, "index_path");
    const auto cfg = config_from(config_json, false);
    const prx::Resources res = cfg.engine.data_dir.empty() ? prx::Resources::bundled()
                                                           : prx::Resources::load(cfg.engine.data_dir);
    auto built = prx::service::build_index_from_jsonl(read_text(corpus_path), cfg.engine, res);
    json summary = {{"report", built.report.to_json()}};
    if (!built.index) {
      set_out(summary_json, prx::json_io::dump(summary) + "\n");
      g_error = built.report.errors.empty() ? "corpus is empty" : "corpus failed ingest";
      return PRX_E_VALIDATION;
    }
    built.index->save(index_path);
    summary["count"] = built.index->size();
    summary["dim"] = built.index->dim();
    summary["index_path"] = index_path;
    set_out(summary_json, prx::json_io::dump(summary) + "\n");
    return PRX_OK;
  });
}

prx_status prx_synth(const char* spec_json, const char* out_path, const char* oracle_path, char** summary_json) {
  return guarded([&] {
    require(out_path, "out_path");
    prx::synth::GenSpec spec;
    if (spec_json && *spec_json) {
      const json j = prx::json_io::parse(spec_json);
      try {
        spec.n = j.value("n", spec.n);
        spec.seed = j.value("seed", spec.seed);
        spec.noise = j.value("noise", spec.noise);
        spec.rule_set_id = j.value("rule_set_id", spec.rule_set_id);
        spec.uninsured_fraction = j.value("uninsured_fraction", spec.uninsured_fraction);
        if (j.contains("label_priors") && !j["label_priors"].is_null()) {
          spec.label_priors = j["label_priors"].get<std::array<double, 3>>();
        }
      } catch (const json::exception& e) {
        throw prx::Error(prx::ErrorCode::InvalidArgument, std::string("synth spec: ") + e.what());
      }
    }
    const auto corpus = prx::synth::generate(spec);
    prx::ingest::write_corpus(out_path, corpus.cases);
    if (oracle_path && *oracle_path) prx::synth::write_oracle(oracle_path, corpus.oracle);
    std::size_t deviated = 0;
    for (const auto& o : corpus.oracle) deviated += o.deviated;
    set_out(summary_json, prx::json_io::dump({{"count", corpus.cases.size()},
                                              {"seed", spec.seed},
                                              {"noise", spec.noise},
                                              {"deviated", deviated},
                                              {"out", out_path}}) +
                              "\n");
    return PRX_OK;
  });
}

prx_status prx_evaluate(const char* config_json, const char* request_json, const char* out_dir, char** result_json) {
  return guarded([&] {
    require(out_dir, "out_dir");
    prx::service::Service svc(config_from(config_json, false));
    const json body = request_json && *request_json ? prx::json_io::parse(request_json) : json::object();
    const auto r = svc.evaluate(body);
    set_out(result_json, prx::json_io::dump(r.body) + "\n");
    if (r.status != 200) {
      const auto& err = r.body.value("error", json::object());
      g_error = err.value("message", std::string("evaluation failed"));
      const auto code = err.value("code", std::string());
      if (code == "NoIndex") return PRX_E_INVALID_ARGUMENT;
      for (int c = 0; c <= static_cast<int>(prx::ErrorCode::Internal); ++c) {
        if (prx::to_string(static_cast<prx::ErrorCode>(c)) == code) return status_of(static_cast<prx::ErrorCode>(c));
      }
      return PRX_E_INTERNAL;
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw prx::Error(prx::ErrorCode::IoError, std::string("cannot create ") + out_dir);
    const std::filesystem::path dir(out_dir);
    for (const auto& [name, text] : r.body.at("tables").items()) write_text(dir / name, text.get<std::string>());
    write_text(dir / "report.json", r.body.at("report").dump(2) + "\n");
    return PRX_OK;
  });
}

}  // extern "C"
