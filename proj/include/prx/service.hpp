#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "prx/embedding.hpp"
#include "prx/ingest.hpp"
#include "prx/rag.hpp"
#include "prx/vector_index.hpp"

namespace prx::service {

// Settings shared by the CLI and the HTTP service.
struct EngineConfig {
  embedding::EmbedderSpec embedder;
  rag::GeneratorSpec generator;
  RetrievalConfig retrieval;
  std::size_t budget = 2048;
  ingest::PipelineConfig pipeline;
  std::string data_dir;  // empty: bundled resources
  unsigned threads = 0;

  static EngineConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string index_path;
  std::string corpus_path;
  std::string audit_log_path;
  EngineConfig engine;

  static ServiceConfig from_json(const nlohmann::json& j);
  static ServiceConfig load(const std::filesystem::path& path);
  // PRECEDENT_RX_* environment overrides.
  void apply_environment();
  void apply_environment(const std::function<const char*(const char*)>& getenv_fn);
  void validate() const;
};

struct Response {
  int status = 200;
  nlohmann::json body;
};

struct Snapshot {
  std::shared_ptr<const index::Index> index;
  std::uint64_t version = 0;
};

// Request handling independent of the transport. The CLI calls these
// directly; HttpServer routes to them.
class Service {
 public:
  explicit Service(ServiceConfig cfg);

  Response recommend(const nlohmann::json& body) const;
  Response get_case(const std::string& id) const;
  Response reindex(const nlohmann::json& body);
  Response evaluate(const nlohmann::json& body,
                    const std::function<void(std::string_view)>& progress = {}) const;
  Response health() const;

  // Installs a built index as the next snapshot.
  std::uint64_t publish(std::shared_ptr<const index::Index> index);
  std::shared_ptr<const Snapshot> snapshot() const;

  const ServiceConfig& config() const { return cfg_; }
  const Resources& resources() const { return *resources_; }
  void set_clock(rag::Clock clock) { clock_ = std::move(clock); }
  void set_audit_sink(std::shared_ptr<rag::AuditSink> sink) { audit_ = std::move(sink); }

 private:
  ServiceConfig cfg_;
  std::shared_ptr<const Resources> resources_;
  std::shared_ptr<const embedding::Encoder> encoder_;
  std::shared_ptr<const rag::Generator> generator_;
  std::shared_ptr<const ingest::Pipeline> pipeline_;
  std::shared_ptr<rag::AuditSink> audit_;
  rag::Clock clock_ = rag::system_now;

  mutable std::mutex snapshot_mu_;
  std::shared_ptr<const Snapshot> snapshot_;
  std::mutex reindex_mu_;
};

// Builds an index from a corpus file by running the full ingest pipeline.
struct BuiltIndex {
  std::shared_ptr<const index::Index> index;
  ingest::IngestReport report;
};
BuiltIndex build_index_from_jsonl(std::string_view jsonl, const EngineConfig& cfg,
                                  const Resources& resources);

class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();

  // Binds and serves on a background thread; returns the bound port.
  int start(const std::string& host, int port);
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

bool is_safe_case_id(std::string_view id);

}  // namespace prx::service
