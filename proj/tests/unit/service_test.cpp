#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "precedent_rx.h"
#include "prx/errors.hpp"
#include "service_fixture.hpp"

using namespace prx;
using namespace prx::service;
using nlohmann::json;
using prx::testing::ServiceWorld;

namespace {

const ServiceWorld& world() {
  static const ServiceWorld w;
  return w;
}

Service& shared_service() {
  static Service s(world().service_config());
  return s;
}

json patient_json(std::size_t i) { return json_io::encode(world().raw.at(i).patient); }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Config, DefaultsAndRoundTrip) {
  const auto c = ServiceConfig::from_json(json::object());
  EXPECT_EQ(c.port, 8080);
  EXPECT_EQ(c.engine.retrieval.k, 5u);
  EXPECT_DOUBLE_EQ(c.engine.retrieval.tau, 0.8);
  EXPECT_EQ(c.engine.embedder.dim, 384u);
  const auto back = EngineConfig::from_json(c.engine.to_json());
  EXPECT_EQ(back.to_json(), c.engine.to_json());
  EXPECT_THROW(ServiceConfig::from_json({{"port", 70000}}).validate(), Error);
  EXPECT_THROW(ServiceConfig::from_json({{"engine", {{"budget", 10}}}}).validate(), Error);
  EXPECT_THROW(ServiceConfig::from_json({{"engine", {{"window_anchor", "noon"}}}}), Error);
  EXPECT_THROW(ServiceConfig::from_json({{"engine", {{"embedder", "magic"}}}}), Error);
}

TEST(Config, EnvironmentOverrides) {
  auto c = ServiceConfig::from_json(json::object());
  const std::map<std::string, std::string> env{{"PRECEDENT_RX_PORT", "9191"},
                                               {"PRECEDENT_RX_K", "9"},
                                               {"PRECEDENT_RX_TAU", "0.6"},
                                               {"PRECEDENT_RX_INDEX", "/tmp/x.idx"},
                                               {"PRECEDENT_RX_DEID_KEY", "k2"}};
  c.apply_environment([&](const char* name) -> const char* {
    auto it = env.find(name);
    return it == env.end() ? nullptr : it->second.c_str();
  });
  EXPECT_EQ(c.port, 9191);
  EXPECT_EQ(c.engine.retrieval.k, 9u);
  EXPECT_DOUBLE_EQ(c.engine.retrieval.tau, 0.6);
  EXPECT_EQ(c.index_path, "/tmp/x.idx");
  EXPECT_EQ(c.engine.pipeline.deid.secret_key, "k2");
  auto bad = ServiceConfig::from_json(json::object());
  EXPECT_THROW(bad.apply_environment([](const char* n) -> const char* {
    return std::string(n) == "PRECEDENT_RX_PORT" ? "eighty" : nullptr;
  }),
               Error);
}

TEST(CaseId, SafeCharacters) {
  EXPECT_TRUE(is_safe_case_id("SYN-7-00001"));
  EXPECT_TRUE(is_safe_case_id("a.b:c_d"));
  EXPECT_FALSE(is_safe_case_id(""));
  EXPECT_FALSE(is_safe_case_id("../etc/passwd"));
  EXPECT_FALSE(is_safe_case_id("a/b"));
  EXPECT_FALSE(is_safe_case_id("a b"));
  EXPECT_FALSE(is_safe_case_id(std::string(129, 'a')));
}

TEST(Service, RecommendReturnsCitedItems) {
  const auto r = shared_service().recommend(patient_json(0));
  ASSERT_EQ(r.status, 200) << r.body.dump();
  const auto& items = r.body.at("recommendation").at("items");
  ASSERT_FALSE(items.empty());
  std::set<std::string> ids;
  for (const auto& c : r.body.at("retrieved_cases")) ids.insert(c.at("record_id").get<std::string>());
  for (const auto& it : items) {
    ASSERT_FALSE(it.at("supporting_case_ids").empty());
    for (const auto& id : it.at("supporting_case_ids")) EXPECT_TRUE(ids.count(id.get<std::string>()));
  }
  EXPECT_EQ(r.body.at("k"), 5);
  EXPECT_EQ(r.body.at("index_version"), 1);
  EXPECT_FALSE(r.body.at("empty_precedent"));
  EXPECT_EQ(r.body.at("prompt_hash").get<std::string>().size(), 64u);
}

TEST(Service, RecommendAcceptsWrappedBodyAndOverrides) {
  const json body = {{"patient", patient_json(1)}, {"k", 2}, {"tau", 0.3}};
  const auto r = shared_service().recommend(body);
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body.at("k"), 2);
  EXPECT_LE(r.body.at("retrieved_cases").size(), 2u);
  EXPECT_EQ(shared_service().recommend(patient_json(1)).body, shared_service().recommend(patient_json(1)).body);
}

TEST(Service, RecommendErrorStatuses) {
  auto& s = shared_service();
  auto invalid = patient_json(0);
  invalid["demographics"]["age"] = 200;
  auto r = s.recommend(invalid);
  EXPECT_EQ(r.status, 422);
  EXPECT_FALSE(r.body.at("violations").empty());
  EXPECT_EQ(s.recommend(json::array()).status, 422);
  auto missing = patient_json(0);
  missing.erase("demographics");
  EXPECT_EQ(s.recommend(missing).status, 422);
  auto k0 = patient_json(0);
  k0["k"] = 0;
  EXPECT_EQ(s.recommend(k0).status, 400);
  auto tau = patient_json(0);
  tau["tau"] = 1.5;
  EXPECT_EQ(s.recommend(tau).status, 400);
  auto budget = patient_json(0);
  budget["budget"] = 8;
  EXPECT_EQ(s.recommend(budget).status, 400);
}

TEST(Service, EmptyPrecedentIsFlagged) {
  auto body = patient_json(0);
  body["tau"] = 1.0;
  body["notes"][0]["raw_text"] = "qqq zzz www";
  const auto r = shared_service().recommend(body);
  ASSERT_EQ(r.status, 200);
  EXPECT_TRUE(r.body.at("empty_precedent"));
  EXPECT_TRUE(r.body.at("recommendation").at("items").empty());
}

TEST(Service, GetCase) {
  auto& s = shared_service();
  const std::string id = s.snapshot()->index->entries().front().record_id;
  const auto r = s.get_case(id);
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body.at("patient").at("record_id"), id);
  EXPECT_EQ(s.get_case("nope").status, 404);
  EXPECT_EQ(s.get_case("../../etc/passwd").status, 400);
}

TEST(Service, NoIndexAndHealth) {
  Service s(world().service_config(false));
  EXPECT_EQ(s.recommend(patient_json(0)).status, 503);
  EXPECT_EQ(s.get_case("x").status, 503);
  EXPECT_EQ(s.health().body.at("status"), "degraded");
  EXPECT_EQ(s.evaluate(json::object()).status, 503);
  const auto r = s.reindex({{"corpus_path", world().corpus.string()}});
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_EQ(r.body.at("count"), world().raw.size());
  EXPECT_EQ(r.body.at("index_version"), 1);
  const auto h = s.health().body;
  EXPECT_EQ(h.at("status"), "ok");
  EXPECT_EQ(h.at("corpus_size"), world().raw.size());
}

TEST(Service, ReindexIncrementsAndKeepsOldIndexOnFailure) {
  Service s(world().service_config());
  const auto v1 = s.snapshot()->version;
  const auto first = s.snapshot()->index;
  std::string jsonl = ingest::encode_corpus({world().raw.begin(), world().raw.begin() + 40});
  auto r = s.reindex({{"jsonl", jsonl}});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body.at("index_version"), v1 + 1);
  EXPECT_EQ(s.snapshot()->index->size(), 40u);

  r = s.reindex({{"jsonl", jsonl + "{not json}\n"}});
  EXPECT_EQ(r.status, 400);
  EXPECT_FALSE(r.body.at("report").at("errors").empty());
  EXPECT_EQ(s.snapshot()->version, v1 + 1);
  EXPECT_EQ(s.snapshot()->index->size(), 40u);
  EXPECT_EQ(s.reindex({{"jsonl", ""}}).status, 400);
  EXPECT_EQ(s.reindex(json::object()).status, 400);
  EXPECT_EQ(s.reindex({{"corpus_path", "/nonexistent.jsonl"}}).status, 400);
  (void)first;
}

TEST(Service, ConcurrentRecommendDuringReindex) {
  Service s(world().service_config());
  const std::string small = ingest::encode_corpus({world().raw.begin(), world().raw.begin() + 60});
  const std::string full = slurp(world().corpus);
  std::atomic<bool> done{false};
  std::atomic<int> failures{0}, calls{0};
  std::vector<std::thread> readers;
  for (int t = 0; t < 3; ++t) {
    readers.emplace_back([&, t] {
      std::size_t i = static_cast<std::size_t>(t);
      while (!done) {
        const auto r = s.recommend(patient_json(i++ % 50));
        ++calls;
        if (r.status != 200) ++failures;
        const auto v = r.body.value("index_version", 0);
        const auto& cases = r.body.value("retrieved_cases", json::array());
        for (const auto& c : cases) {
          if (s.snapshot()->version == static_cast<std::uint64_t>(v) && !s.snapshot()->index->find(c.at("record_id").get<std::string>())) {
            ++failures;
          }
        }
      }
    });
  }
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(s.reindex({{"jsonl", i % 2 ? full : small}}).status, 200);
  }
  done = true;
  for (auto& t : readers) t.join();
  EXPECT_EQ(failures.load(), 0);
  EXPECT_GT(calls.load(), 0);
  EXPECT_EQ(s.snapshot()->version, 5u);
}

TEST(Service, EvaluateEndpoint) {
  auto& s = shared_service();
  const auto r = s.evaluate({{"ks", {3, 5}}, {"baseline", false}});
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_GT(r.body.at("test_size"), 0);
  EXPECT_NE(r.body.at("tables").at("retrieval.csv").get<std::string>().find("top_5"), std::string::npos);
  EXPECT_EQ(s.evaluate({{"split", {{"fractions", {0.5, 0.5, 0.5}}}}}).status, 400);
  EXPECT_EQ(s.evaluate({{"jsonl", "{bad\n"}}).status, 400);
  std::vector<std::string> progress;
  const auto again = s.evaluate({{"baseline", false}, {"corpus_path", world().corpus.string()}},
                                [&](std::string_view m) { progress.emplace_back(m); });
  EXPECT_EQ(again.status, 200);
  EXPECT_FALSE(progress.empty());
}

TEST(Service, EmbedderDimensionMismatchRejected) {
  prx::testing::TempDir dir;
  auto cfg = world().config();
  cfg["engine"]["embedder_dim"] = 32;
  cfg.erase("corpus_path");
  Service s(ServiceConfig::from_json(cfg));
  const auto idx = shared_service().snapshot()->index;
  try {
    s.publish(idx);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

class HttpTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_ = std::make_unique<HttpServer>(shared_service());
    port_ = server_->start("127.0.0.1", 0);
  }
  void TearDown() override { server_->stop(); }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

  std::unique_ptr<HttpServer> server_;
  int port_ = 0;
};

TEST_F(HttpTest, RoutesMatchServiceCalls) {
  auto c = client();
  const std::string body = patient_json(2).dump();
  auto res = c.Post("/recommend", body, "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body), shared_service().recommend(patient_json(2)).body);
  res = c.Post("/recommend", "{garbage", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 422);
  res = c.Get("/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body).at("status"), "ok");
  const std::string id = shared_service().snapshot()->index->entries()[3].record_id;
  res = c.Get(("/cases/" + id).c_str());
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  res = c.Get("/cases/a%2F..%2Fb");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  res = c.Get("/cases/missing-id");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  res = c.Post("/corpus/reindex", "[", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST_F(HttpTest, EvaluateStreamsProgress) {
  auto c = client();
  c.set_read_timeout(std::chrono::seconds(120));
  auto res = c.Post("/evaluate?stream=1", json{{"baseline", false}}.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  std::vector<json> lines;
  std::istringstream in(res->body);
  for (std::string l; std::getline(in, l);) {
    if (!l.empty()) lines.push_back(json::parse(l));
  }
  ASSERT_GE(lines.size(), 2u);
  EXPECT_TRUE(lines.front().contains("progress"));
  EXPECT_EQ(lines.back().at("status"), 200);
  EXPECT_TRUE(lines.back().at("result").contains("report"));
  res = c.Post("/evaluate", json{{"split", {{"fractions", {1.0, 1.0, 0.0}}}}}.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST(CApi, ServiceLifecycleAndErrors) {
  EXPECT_STRNE(prx_version(), "");
  EXPECT_STREQ(prx_status_name(PRX_OK), "OK");
  prx_service* svc = nullptr;
  EXPECT_NE(prx_service_open("{not json", 0, &svc), PRX_OK);
  EXPECT_EQ(svc, nullptr);
  EXPECT_STRNE(prx_last_error(), "");
  ASSERT_EQ(prx_service_open(world().config().dump().c_str(), 0, &svc), PRX_OK) << prx_last_error();
  int status = 0;
  char* out = nullptr;
  ASSERT_EQ(prx_service_call(svc, "health", nullptr, &status, &out), PRX_OK);
  EXPECT_EQ(status, 200);
  EXPECT_EQ(json::parse(out).at("status"), "ok");
  prx_string_free(out);
  ASSERT_EQ(prx_service_call(svc, "recommend", patient_json(4).dump().c_str(), &status, &out), PRX_OK);
  EXPECT_EQ(status, 200);
  prx_string_free(out);
  ASSERT_EQ(prx_service_call(svc, "case", "../x", &status, &out), PRX_OK);
  EXPECT_EQ(status, 400);
  prx_string_free(out);
  EXPECT_EQ(prx_service_call(svc, "bogus", "{}", &status, &out), PRX_E_INVALID_ARGUMENT);
  EXPECT_EQ(prx_service_call(nullptr, "health", "{}", &status, &out), PRX_E_INVALID_ARGUMENT);
  prx_service_close(svc);
  prx_service_close(nullptr);
}

TEST(CApi, BuildIndexSynthAndEvaluate) {
  prx::testing::TempDir dir;
  char* summary = nullptr;
  const auto corpus = (dir / "c.jsonl").string();
  ASSERT_EQ(prx_synth(R"({"n":120,"seed":3})", corpus.c_str(), (dir / "o.jsonl").string().c_str(), &summary),
            PRX_OK)
      << prx_last_error();
  prx_string_free(summary);
  const std::string cfg = R"({"engine":{"embedder_dim":32}})";
  const auto idx = (dir / "i.bin").string();
  ASSERT_EQ(prx_index_build(cfg.c_str(), corpus.c_str(), idx.c_str(), &summary), PRX_OK) << prx_last_error();
  EXPECT_EQ(json::parse(summary).at("count"), 120);
  prx_string_free(summary);
  EXPECT_EQ(index::Index::load(idx).size(), 120u);
  char* report = nullptr;
  ASSERT_EQ(prx_ingest(cfg.c_str(), corpus.c_str(), (dir / "pre.jsonl").string().c_str(), &report), PRX_OK);
  prx_string_free(report);
  EXPECT_EQ(ingest::read_corpus(dir / "pre.jsonl").size(), 120u);
  char* result = nullptr;
  const std::string req = json{{"corpus_path", corpus}, {"baseline", true}}.dump();
  ASSERT_EQ(prx_evaluate(cfg.c_str(), req.c_str(), (dir / "out").string().c_str(), &result), PRX_OK)
      << prx_last_error();
  prx_string_free(result);
  for (const char* f : {"performance.csv", "ccr.csv", "retrieval.csv", "report.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / f)) << f;
  }
  EXPECT_EQ(prx_index_build(cfg.c_str(), "/nonexistent.jsonl", idx.c_str(), &summary), PRX_E_IO);
}

TEST(Cli, RecommendMatchesServiceBody) {
  using prx::testing::shell_quote;
  prx::testing::TempDir dir;
  const auto rec = dir / "p.json";
  std::ofstream(rec) << patient_json(6).dump();
  const std::string cmd = std::string(PRX_CLI_PATH) + " recommend --record " + shell_quote(rec.string()) +
                          " --corpus " + shell_quote(world().corpus.string()) + " --dim 64 --tau 0.5";
  const auto r = prx::testing::run_command(cmd);
  ASSERT_EQ(r.exit_code, 0) << r.out;
  auto body = patient_json(6);
  body["tau"] = 0.5;
  EXPECT_EQ(json::parse(r.out), shared_service().recommend(body).body);
}

TEST(Cli, UsageAndFailureExitCodes) {
  using prx::testing::run_command;
  EXPECT_EQ(run_command(std::string(PRX_CLI_PATH) + " --help").exit_code, 0);
  EXPECT_EQ(run_command(std::string(PRX_CLI_PATH)).exit_code, 1);
  EXPECT_EQ(run_command(std::string(PRX_CLI_PATH) + " recommend --record /x.json").exit_code, 1);
  EXPECT_EQ(run_command(std::string(PRX_CLI_PATH) + " index --corpus /nonexistent --out /tmp/prx_x.bin").exit_code,
            2);
  prx::testing::TempDir dir;
  const auto out = (dir / "s.jsonl").string();
  const auto r = run_command(std::string(PRX_CLI_PATH) + " synth --n 25 --seed 4 --out " + out);
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(ingest::read_corpus(out).size(), 25u);
}
