#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <map>

#include "fixtures.hpp"
#include "mock_server.hpp"
#include "prx/embedding.hpp"
#include "prx/errors.hpp"
#include "prx/hashing.hpp"
#include "prx/json_io.hpp"

using namespace prx;
using namespace prx::embedding;

namespace {

// Independent feature-hashing oracle: whitespace split, edge punctuation
// stripped, lowercase, signed bucket counts, L2 normalization.
std::vector<double> oracle_embed(const std::string& text, std::size_t dim) {
  std::vector<double> v(dim, 0.0);
  std::string word;
  auto flush = [&] {
    const std::string punct = ".,;:!?()[]{}\"'`";
    std::size_t a = 0, b = word.size();
    while (a < b && punct.find(word[a]) != std::string::npos) ++a;
    while (b > a && punct.find(word[b - 1]) != std::string::npos) --b;
    std::string core = word.substr(a, b - a);
    for (char& c : core) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (!core.empty()) {
      const std::uint64_t h = hashing::fnv1a64(core);
      const bool neg = (hashing::mix64(hashing::fnv1a64(core, 0x84222325cbf29ce4ull)) >> 63) != 0;
      v[h % dim] += neg ? -1.0 : 1.0;
    }
    word.clear();
  };
  for (char c : text) {
    if (c == ' ' || c == '\n' || c == '\t') flush();
    else word += c;
  }
  flush();
  double n = 0;
  for (double x : v) n += x * x;
  for (double& x : v) x /= std::sqrt(n);
  return v;
}

double dot(const Embedding& a, const Embedding& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += static_cast<double>(a.values[i]) * b.values[i];
  return s;
}

}  // namespace

TEST(ReferenceEmbedder, MatchesIndependentOracle) {
  const ReferenceEmbedder enc(384);
  for (const std::string text : {"Severe wrist pain, pain 8/10.", "(knee) OA knee knee", "Patient denies fever; no GI bleed.",
                                 "chronic lower back pain after lifting"}) {
    const auto got = enc.embed_one(text);
    const auto want = oracle_embed(text, 384);
    ASSERT_EQ(got.dim(), 384u);
    for (std::size_t i = 0; i < 384; ++i) EXPECT_NEAR(got.values[i], want[i], 1e-6) << text << " @" << i;
  }
}

TEST(ReferenceEmbedder, UnitNormDeterministicAndCaseInsensitive) {
  const ReferenceEmbedder enc(64);
  const auto a = enc.embed_one("Acute Fracture of the Wrist");
  EXPECT_NEAR(dot(a, a), 1.0, 1e-6);
  EXPECT_EQ(a, enc.embed_one("acute fracture of the wrist"));
  EXPECT_EQ(enc.embed({"x y", "z"}), (std::vector<Embedding>{enc.embed_one("x y"), enc.embed_one("z")}));
  const auto p = enc.embed_one("...");
  EXPECT_NEAR(dot(p, p), 1.0, 1e-6);
  EXPECT_THROW(enc.embed_one(""), Error);
  EXPECT_THROW(ReferenceEmbedder(0), Error);
}

TEST(EmbedderSpec, ParsesFlags) {
  EXPECT_EQ(EmbedderSpec::parse("reference").kind, EmbedderKind::reference_hash);
  const auto h = EmbedderSpec::parse("http:http://127.0.0.1:9/v1", 16);
  EXPECT_EQ(h.kind, EmbedderKind::external_http);
  EXPECT_EQ(h.endpoint, "http://127.0.0.1:9/v1");
  EXPECT_EQ(h.dim, 16u);
  EXPECT_THROW(EmbedderSpec::parse("sbert"), Error);
  EXPECT_THROW(embed_texts({}, {}), Error);
  EXPECT_THROW(embed_texts({}, {""}), Error);
}

TEST(Aggregate, NormalizedMean) {
  Embedding a{{1, 0, 0}}, b{{0, 1, 0}};
  const auto m = aggregate(std::vector<Embedding>{a, b});
  EXPECT_NEAR(m.values[0], 1 / std::sqrt(2.0), 1e-6);
  EXPECT_NEAR(m.values[1], 1 / std::sqrt(2.0), 1e-6);
  EXPECT_THROW(aggregate(std::vector<Embedding>{}), Error);
  try {
    aggregate_case(std::vector<EmbeddedChunk>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCase);
  }
  EXPECT_THROW(aggregate(std::vector<Embedding>{a, Embedding{{1, 0}}}), Error);
  const double zero[] = {0.0, 0.0};
  EXPECT_THROW(normalize(zero), Error);
}

TEST(EmbedRecord, CaseAndProfileEmbeddings) {
  ingest::Pipeline pipeline({});
  const auto p = pipeline.run(prx::testing::sample_patient());
  const ReferenceEmbedder enc;
  const auto r = embed_record(p, enc);
  ASSERT_FALSE(r.chunks.empty());
  std::vector<Embedding> es;
  for (const auto& c : r.chunks) es.push_back(enc.embed_one(c.chunk.text));
  EXPECT_EQ(r.case_embedding, aggregate(es));
  const auto prof = profile_embedding(r);
  Embedding expect = aggregate(std::vector<Embedding>{r.chunks[0].embedding, r.chunks[2].embedding});
  EXPECT_EQ(r.chunks[2].chunk.source_detail.substr(r.chunks[2].chunk.source_detail.size() - 15), "chief_complaint");
  EXPECT_EQ(prof, expect);
}

TEST(HttpEncoder, RetriesTransientFailuresAndBatches) {
  prx::testing::MockServer mock;
  std::atomic<int> calls{0};
  std::atomic<int> batches{0};
  mock.server().Post("/v1/embed", [&](const httplib::Request& req, httplib::Response& res) {
    if (calls++ == 0) {
      res.status = 503;
      return;
    }
    ++batches;
    const auto body = nlohmann::json::parse(req.body);
    EXPECT_EQ(body.at("model"), "mini");
    nlohmann::json vectors = nlohmann::json::array();
    for (const auto& t : body.at("texts")) {
      const auto v = ReferenceEmbedder(8).embed_one(t.get<std::string>());
      vectors.push_back(v.values);
    }
    res.set_content(nlohmann::json{{"vectors", vectors}}.dump(), "application/json");
  });
  mock.start();
  auto spec = EmbedderSpec::parse("http:" + mock.url() + "/v1", 8);
  spec.model_name = "mini";
  spec.http.backoff_ms = 1;
  spec.http.batch_size = 2;
  const auto enc = make_encoder(spec);
  const auto out = enc->embed({"a b", "c", "d e f", "g", "h"});
  ASSERT_EQ(out.size(), 5u);
  EXPECT_EQ(batches.load(), 3);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_NEAR(dot(out[i], ReferenceEmbedder(8).embed_one(std::vector<std::string>{"a b", "c", "d e f", "g", "h"}[i])), 1.0, 1e-6);
  }
}

TEST(HttpEncoder, DimensionMismatchAndExhaustedRetries) {
  prx::testing::MockServer mock;
  std::atomic<int> calls{0};
  mock.server().Post("/embed", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"vectors":[[1,0,0]]})", "application/json");
  });
  mock.server().Post("/down/embed", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 500;
  });
  mock.start();
  auto spec = EmbedderSpec::parse("http:" + mock.url(), 4);
  spec.http.backoff_ms = 1;
  try {
    make_encoder(spec)->embed({"x"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  auto down = EmbedderSpec::parse("http:" + mock.url() + "/down", 4);
  down.http.backoff_ms = 1;
  down.http.max_retries = 2;
  try {
    make_encoder(down)->embed({"x"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmbedServiceError);
  }
  EXPECT_EQ(calls.load(), 3);
}
