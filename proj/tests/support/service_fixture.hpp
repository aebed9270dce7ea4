#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "prx/ingest.hpp"
#include "prx/json_io.hpp"
#include "prx/service.hpp"
#include "prx/synth.hpp"

namespace prx::testing {

// A raw synthetic corpus on disk plus a matching service configuration.
struct ServiceWorld {
  TempDir dir;
  std::vector<CaseRecord> raw;
  std::filesystem::path corpus;

  explicit ServiceWorld(std::size_t n = 200, std::uint64_t seed = 13) {
    raw = synth::generate({.n = n, .seed = seed}).cases;
    corpus = dir / "corpus.jsonl";
    ingest::write_corpus(corpus, raw);
  }

  nlohmann::json config(bool with_corpus = true) const {
    nlohmann::json j = {{"engine", {{"embedder_dim", 64}, {"tau", 0.5}}}};
    if (with_corpus) j["corpus_path"] = corpus.string();
    return j;
  }
  service::ServiceConfig service_config(bool with_corpus = true) const {
    return service::ServiceConfig::from_json(config(with_corpus));
  }
};

struct CommandResult {
  int exit_code = -1;
  std::string out;
};

inline CommandResult run_command(const std::string& cmd) {
  CommandResult r;
  FILE* p = ::popen((cmd + " 2>/dev/null").c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int st = ::pclose(p);
  r.exit_code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

}  // namespace prx::testing
