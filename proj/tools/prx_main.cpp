#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "precedent_rx.h"

namespace {

using nlohmann::json;

std::atomic<bool> g_stop{false};

struct Owned {
  char* p = nullptr;
  ~Owned() { prx_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

int exit_code(prx_status s) {
  switch (s) {
    case PRX_OK: return 0;
    case PRX_E_INVALID_ARGUMENT:
    case PRX_E_SCHEMA:
    case PRX_E_VALIDATION:
    case PRX_E_MALFORMED_CODE:
    case PRX_E_TIMESTAMP:
    case PRX_E_BUDGET_TOO_SMALL:
    case PRX_E_DUPLICATE_ID:
    case PRX_E_EMPTY_CASE:
      return 1;
    default:
      return 2;
  }
}

int fail(prx_status s) {
  std::cerr << "error: " << prx_status_name(s) << ": " << prx_last_error();
  if (*prx_last_error_path()) std::cerr << " (at " << prx_last_error_path() << ")";
  std::cerr << "\n";
  return exit_code(s);
}

std::optional<std::string> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Common {
  std::string config_path;
  std::string embedder;
  std::string generator;
  std::optional<std::size_t> k;
  std::optional<double> tau;
  std::optional<std::size_t> budget;
  std::optional<std::size_t> dim;
  std::string data_dir;
};

void add_common(CLI::App* cmd, Common& c, bool retrieval) {
  cmd->add_option("--config", c.config_path, "Service configuration JSON file");
  cmd->add_option("--embedder", c.embedder, "reference | http:URL");
  cmd->add_option("--dim", c.dim, "Embedding dimension");
  cmd->add_option("--data-dir", c.data_dir, "Resource table override directory");
  if (retrieval) {
    cmd->add_option("--generator", c.generator, "stub | http:URL");
    cmd->add_option("--k", c.k, "Number of precedent cases");
    cmd->add_option("--tau", c.tau, "Similarity threshold");
    cmd->add_option("--budget", c.budget, "Prompt token budget");
  }
}

// Configuration file overlaid with command-line flags.
std::optional<json> build_config(const Common& c) {
  json cfg = json::object();
  if (!c.config_path.empty()) {
    auto text = read_file(c.config_path);
    if (!text) {
      std::cerr << "error: cannot read config " << c.config_path << "\n";
      return std::nullopt;
    }
    cfg = json::parse(*text, nullptr, false);
    if (cfg.is_discarded() || !cfg.is_object()) {
      std::cerr << "error: config " << c.config_path << " is not a JSON object\n";
      return std::nullopt;
    }
  }
  json& eng = cfg["engine"];
  if (!eng.is_object()) eng = json::object();
  if (!c.embedder.empty()) eng["embedder"] = c.embedder;
  if (!c.generator.empty()) eng["generator"] = c.generator;
  if (c.dim) eng["embedder_dim"] = *c.dim;
  if (c.k) eng["k"] = *c.k;
  if (c.tau) eng["tau"] = *c.tau;
  if (c.budget) eng["budget"] = *c.budget;
  if (!c.data_dir.empty()) eng["data_dir"] = c.data_dir;
  return cfg;
}

void on_signal(int) { g_stop = true; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Precedent-based analgesic prescribing support"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(prx_version()));

  Common common;
  std::string corpus, out, index_path, record, oracle, host = "127.0.0.1";
  std::size_t n = 100;
  std::uint64_t seed = 7;
  double noise = 0.0, uninsured = 0.30;
  int port = 8080;
  bool no_baseline = false;

  auto* ingest = app.add_subcommand("ingest", "Preprocess a raw JSONL corpus");
  ingest->add_option("--corpus", corpus, "Raw corpus JSONL")->required();
  ingest->add_option("--out", out, "Preprocessed corpus JSONL")->required();
  add_common(ingest, common, false);

  auto* index = app.add_subcommand("index", "Build a case index from a corpus");
  index->add_option("--corpus", corpus, "Corpus JSONL")->required();
  index->add_option("--index,--out", index_path, "Index file to write")->required();
  add_common(index, common, false);

  auto* recommend = app.add_subcommand("recommend", "Recommend treatments for one patient");
  recommend->add_option("--record", record, "Patient record JSON")->required();
  recommend->add_option("--index", index_path, "Index file");
  recommend->add_option("--corpus", corpus, "Corpus JSONL to index in memory instead of --index");
  add_common(recommend, common, true);

  auto* evaluate = app.add_subcommand("evaluate", "Run the held-out evaluation protocol");
  evaluate->add_option("--corpus", corpus, "Corpus JSONL")->required();
  evaluate->add_option("--out", out, "Report directory")->required();
  evaluate->add_option("--seed", seed, "Split seed");
  evaluate->add_flag("--no-baseline", no_baseline, "Skip the logistic baseline");
  add_common(evaluate, common, true);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--n", n, "Number of records");
  synth->add_option("--seed", seed, "Generator seed");
  synth->add_option("--noise", noise, "Probability of a deviating recorded treatment");
  synth->add_option("--uninsured", uninsured, "Uninsured fraction");
  synth->add_option("--out", out, "Corpus JSONL")->required();
  synth->add_option("--oracle", oracle, "Oracle JSONL");

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  serve->add_option("--index", index_path, "Index file");
  serve->add_option("--corpus", corpus, "Corpus JSONL to index at startup");
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port (0 picks one)");
  add_common(serve, common, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    std::cout << prx_version() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  if (*synth) {
    const json spec = {{"n", n}, {"seed", seed}, {"noise", noise}, {"uninsured_fraction", uninsured}};
    Owned summary;
    const auto s = prx_synth(spec.dump().c_str(), out.c_str(), oracle.empty() ? nullptr : oracle.c_str(), &summary.p);
    if (s != PRX_OK) return fail(s);
    std::cerr << summary.str();
    return 0;
  }

  auto cfg = build_config(common);
  if (!cfg) return 1;

  if (*ingest) {
    Owned report;
    const auto s = prx_ingest(cfg->dump().c_str(), corpus.c_str(), out.c_str(), &report.p);
    std::cerr << report.str();
    return s == PRX_OK ? 0 : fail(s);
  }
  if (*index) {
    Owned summary;
    const auto s = prx_index_build(cfg->dump().c_str(), corpus.c_str(), index_path.c_str(), &summary.p);
    std::cerr << summary.str();
    return s == PRX_OK ? 0 : fail(s);
  }
  if (*evaluate) {
    json req = {{"corpus_path", corpus}, {"split", {{"seed", seed}}}, {"baseline", !no_baseline}};
    Owned result;
    const auto s = prx_evaluate(cfg->dump().c_str(), req.dump().c_str(), out.c_str(), &result.p);
    if (s != PRX_OK) {
      std::cerr << result.str();
      return fail(s);
    }
    const json r = json::parse(result.str());
    std::cout << r.at("tables").at("performance.csv").get<std::string>() << "\n"
              << r.at("tables").at("ccr.csv").get<std::string>() << "\n"
              << r.at("tables").at("retrieval.csv").get<std::string>();
    return 0;
  }

  if (!index_path.empty()) (*cfg)["index_path"] = index_path;
  if (!corpus.empty()) (*cfg)["corpus_path"] = corpus;
  if (index_path.empty() && corpus.empty() && !cfg->contains("index_path") && !cfg->contains("corpus_path") &&
      *recommend) {
    std::cerr << "error: recommend needs --index or --corpus\n";
    return 1;
  }
  if (*serve) {
    (*cfg)["host"] = host;
    (*cfg)["port"] = port;
  }
  prx_service* svc = nullptr;
  if (auto s = prx_service_open(cfg->dump().c_str(), 1, &svc); s != PRX_OK) return fail(s);

  if (*recommend) {
    auto text = read_file(record);
    if (!text) {
      std::cerr << "error: cannot read " << record << "\n";
      prx_service_close(svc);
      return 2;
    }
    json body = json::parse(*text, nullptr, false);
    if (body.is_object()) {
      if (common.k) body["k"] = *common.k;
      if (common.tau) body["tau"] = *common.tau;
      if (common.budget) body["budget"] = *common.budget;
    }
    int status = 0;
    Owned response;
    const std::string payload = body.is_discarded() ? *text : body.dump();
    const auto s = prx_service_call(svc, "recommend", payload.c_str(), &status, &response.p);
    prx_service_close(svc);
    if (s != PRX_OK) return fail(s);
    std::cout << response.str();
    return status == 200 ? 0 : status < 500 ? 1 : 2;
  }

  prx_server* server = nullptr;
  int bound = 0;
  if (auto s = prx_server_start(svc, host.c_str(), port, &server, &bound); s != PRX_OK) {
    prx_service_close(svc);
    return fail(s);
  }
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "listening on " << host << ":" << bound << "\n";
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  prx_server_stop(server);
  prx_service_close(svc);
  return 0;
}
