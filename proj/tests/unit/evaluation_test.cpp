#include <gtest/gtest.h>

#include <fstream>
#include <map>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "prx/errors.hpp"
#include "prx/evaluation.hpp"
#include "prx/protocol.hpp"
#include "prx/rng.hpp"

using namespace prx;
using namespace prx::eval;

namespace {

PredictionRecord pred(bool predicted, bool truth, double score = 0.5, Task task = Task::opioid_any) {
  PredictionRecord p;
  p.task = task;
  p.predicted_label = predicted;
  p.true_label = truth;
  p.score = score;
  return p;
}

RetrievedCase rc(std::string id, std::string treatment, double sim, std::optional<double> profile = {}) {
  RetrievedCase r;
  r.record_id = std::move(id);
  r.treatments = {std::move(treatment)};
  r.similarity = sim;
  r.profile_similarity = profile;
  return r;
}

PredictionRecord ccr_pred(std::string id, std::string predicted, std::set<std::string> truth,
                          std::vector<RetrievedCase> cases) {
  PredictionRecord p;
  p.record_id = std::move(id);
  p.predicted_treatment = std::move(predicted);
  p.true_treatments = std::move(truth);
  RetrievalSet rs;
  rs.cases = std::move(cases);
  p.retrieval = rs;
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(ClassificationMetrics, ConfusionMatrixFixture) {
  std::vector<PredictionRecord> ps;
  for (int i = 0; i < 2; ++i) ps.push_back(pred(true, true));
  ps.push_back(pred(true, false));
  ps.push_back(pred(false, true));
  for (int i = 0; i < 6; ++i) ps.push_back(pred(false, false));
  const auto m = classification_metrics(ps);
  EXPECT_EQ(m.tp, 2u);
  EXPECT_EQ(m.fp, 1u);
  EXPECT_EQ(m.fn, 1u);
  EXPECT_EQ(m.tn, 6u);
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.f1, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.8);
  EXPECT_TRUE(m.zero_denominator.empty());
}

TEST(ClassificationMetrics, ZeroDenominatorsAndErrors) {
  const auto m = classification_metrics({pred(false, false), pred(false, false)});
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(m.precision, 0.0);
  EXPECT_EQ(m.zero_denominator, (std::vector<std::string>{"precision", "recall", "f1"}));
  EXPECT_THROW(classification_metrics({}), Error);
  try {
    classification_metrics({pred(true, true), pred(true, true, 0.5, Task::non_opioid)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MixedTasks);
  }
}

TEST(Auroc, PairsFixture) {
  EXPECT_DOUBLE_EQ(auroc({0.9, 0.4, 0.5, 0.1}, {true, true, false, false}), 0.75);
  EXPECT_DOUBLE_EQ(auroc({0.5, 0.5}, {true, false}), 0.5);
  try {
    auroc({0.1, 0.2}, {true, true});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingleClass);
  }
}

TEST(Auroc, MatchesAllPairsOracleWithTies) {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(499);
    const int levels = 1 + static_cast<int>(rng.below(20));
    std::vector<double> s(n);
    std::vector<bool> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(static_cast<std::uint64_t>(levels))) / levels;
      y[i] = rng.bernoulli(0.4);
    }
    y[0] = true;
    y[1] = false;
    EXPECT_NEAR(auroc(s, y), oracle::auroc(s, y), 1e-12);
  }
}

TEST(Auroc, PredictionRecordOverload) {
  std::vector<PredictionRecord> ps{pred(true, true, 0.9), pred(false, true, 0.4), pred(false, false, 0.5),
                                   pred(false, false, 0.1)};
  EXPECT_DOUBLE_EQ(auroc(ps), 0.75);
}

TEST(Ccr, BoundaryFixtures) {
  const auto exact = ccr({ccr_pred("q1", "ibuprofen:standard", {"ibuprofen:standard"}, {})});
  EXPECT_DOUBLE_EQ(exact.ccr_pct, 100.0);
  EXPECT_DOUBLE_EQ(exact.exact_match_pct, 100.0);
  EXPECT_EQ(exact.per_case[0].criterion, Criterion::exact_match);

  const auto justified =
      ccr({ccr_pred("q2", "oxycodone:standard", {"ibuprofen:standard"}, {rc("d1", "oxycodone:standard", 0.85)})},
          0.80);
  EXPECT_DOUBLE_EQ(justified.ccr_pct, 100.0);
  EXPECT_DOUBLE_EQ(justified.exact_match_pct, 0.0);
  EXPECT_EQ(justified.per_case[0].criterion, Criterion::justified_deviation);
  EXPECT_EQ(justified.per_case[0].justifying_case_id, "d1");

  const auto rejected =
      ccr({ccr_pred("q3", "oxycodone:standard", {"ibuprofen:standard"}, {rc("d1", "oxycodone:standard", 0.79)})},
          0.80);
  EXPECT_DOUBLE_EQ(rejected.ccr_pct, 0.0);
  EXPECT_FALSE(rejected.per_case[0].consistent);
}

TEST(Ccr, ProfileSimilarityTakesPrecedence) {
  const auto r = ccr({ccr_pred("q", "x", {"y"}, {rc("a", "x", 0.95, 0.5), rc("b", "x", 0.6, 0.9)})}, 0.8);
  EXPECT_EQ(r.per_case[0].justifying_case_id, "b");
  EXPECT_EQ(r.per_case[0].profile_similarity, 0.9);
  const auto none = ccr({ccr_pred("q", "x", {"y"}, {rc("a", "z", 0.99)})}, 0.8);
  EXPECT_FALSE(none.per_case[0].consistent);
}

TEST(Ccr, DedupesAndRequiresRetrieval) {
  auto p = ccr_pred("q", "x", {"x"}, {});
  const auto r = ccr({p, p, p});
  EXPECT_EQ(r.total, 1u);
  PredictionRecord bare;
  bare.record_id = "b";
  bare.predicted_treatment = "x";
  bare.true_treatments = {"y"};
  try {
    ccr({bare});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingRetrieval);
  }
}

TEST(Ccr, ExactNeverExceedsCcr) {
  Rng rng(77);
  const std::vector<std::string> vocab{"a", "b", "c", "d"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<PredictionRecord> ps;
    const std::size_t n = 1 + rng.below(40);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<RetrievedCase> cases;
      for (std::size_t c = 0, m = rng.below(6); c < m; ++c) {
        cases.push_back(rc("d" + std::to_string(c), rng.pick(vocab), rng.uniform(0.5, 1.0)));
      }
      ps.push_back(ccr_pred("q" + std::to_string(i), rng.pick(vocab), {rng.pick(vocab)}, cases));
    }
    const auto r = ccr(ps, rng.uniform(0.6, 0.95));
    EXPECT_LE(r.exact_match_pct, r.ccr_pct);
  }
}

TEST(AtK, PrecisionFixture) {
  const OutcomeLabels yes{true, false, false}, no{false, true, true};
  auto with = [&](std::vector<bool> hits) {
    RankedQuery q;
    q.true_class = yes;
    for (bool h : hits) {
      RetrievedCase r;
      r.labels = h ? yes : no;
      q.retrieved.cases.push_back(r);
    }
    return q;
  };
  std::vector<RankedQuery> qs{with({1, 1, 1, 1, 1}), with({1, 0, 1, 0, 0}), with({0, 0, 0, 0, 0}),
                              with({1, 1, 0, 1})};
  // Fourth query has only 4 results: 3 hits of 5 slots = 0.6.
  const auto r = precision_at_k(qs, 5);
  EXPECT_NEAR(r.value, 0.5, 1e-12);
  EXPECT_EQ(r.padded, 1u);
  EXPECT_THROW(precision_at_k(qs, 0), Error);
}

TEST(AtK, MeanSimFixtureAndRecomputation) {
  RetrievalSet s;
  for (double x : {0.9, 0.8, 0.7}) {
    RetrievedCase r;
    r.similarity = x;
    s.cases.push_back(r);
  }
  EXPECT_NEAR(mean_sim_at_k({s}, 3).value, 0.8, 1e-12);
  EXPECT_NEAR(mean_sim_at_k({s}, 4).value, 0.6, 1e-12);

  const auto entries = oracle::random_entries(300, 12, 4);
  const auto idx = index::Index::build(entries, 12);
  std::vector<RetrievalSet> sets;
  double want = 0;
  for (std::size_t q = 0; q < 20; ++q) {
    const auto& qv = entries[q * 7].case_embedding;
    sets.push_back(idx.search(qv, {5, 0.0, {}}));
    const auto hits = oracle::search(entries, qv, 5, 0.0);
    double s5 = 0;
    for (const auto& h : hits) s5 += h.sim;
    want += s5 / 5.0;
  }
  EXPECT_NEAR(mean_sim_at_k(sets, 5).value, want / 20.0, 1e-9);
}

TEST(Split, StratifiedDisjointDeterministic) {
  const auto corpus = synth::generate({.n = 1000, .seed = 7}).cases;
  const SplitSpec spec;
  const auto a = split(corpus, spec);
  const auto b = split(corpus, spec);
  ASSERT_EQ(a.train.size() + a.val.size() + a.test.size(), corpus.size());
  std::set<std::string> seen;
  for (const auto* part : {&a.train, &a.val, &a.test}) {
    for (const auto& c : *part) EXPECT_TRUE(seen.insert(c.patient.record_id).second);
  }
  for (std::size_t i = 0; i < a.test.size(); ++i) EXPECT_EQ(a.test[i].patient.record_id, b.test[i].patient.record_id);

  std::map<std::string, std::array<std::size_t, 4>> strata;
  const std::array<const std::vector<CaseRecord>*, 3> parts{&a.train, &a.val, &a.test};
  for (int s = 0; s < 3; ++s) {
    for (const auto& c : *parts[s]) {
      ++strata[stratum_key(c)][s];
      ++strata[stratum_key(c)][3];
    }
  }
  for (const auto& [key, n] : strata) {
    if (n[3] < spec.min_stratum) continue;
    for (int s = 0; s < 3; ++s) {
      EXPECT_LE(std::fabs(static_cast<double>(n[s]) - spec.fractions[s] * n[3]), 1.0) << key << " " << s;
    }
  }
  std::size_t uninsured = 0;
  for (const auto& c : a.test) uninsured += c.patient.demographics.insurance_status == InsuranceStatus::uninsured;
  EXPECT_NEAR(static_cast<double>(uninsured) / static_cast<double>(a.test.size()), 0.30, 0.02);
  const auto other = split(corpus, {spec.fractions, 8});
  EXPECT_NE(other.test.front().patient.record_id + other.test.back().patient.record_id,
            a.test.front().patient.record_id + a.test.back().patient.record_id);
}

TEST(Split, RepeatedIdsStayTogetherAndSmallStrataWarn) {
  auto corpus = synth::generate({.n = 60, .seed = 3}).cases;
  for (int i = 0; i < 5; ++i) corpus.push_back(corpus[i]);
  corpus[10].patient.demographics.insurance_status = InsuranceStatus::unknown;
  const auto r = split(corpus, {});
  std::map<std::string, std::set<int>> where;
  const std::array<const std::vector<CaseRecord>*, 3> parts{&r.train, &r.val, &r.test};
  for (int s = 0; s < 3; ++s) {
    for (const auto& c : *parts[s]) where[c.patient.record_id].insert(s);
  }
  for (const auto& [id, s] : where) EXPECT_EQ(s.size(), 1u) << id;
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_EQ(r.warnings[0].rfind("StratumTooSmall", 0), 0u);
}

TEST(Split, RejectsBadSpecs) {
  const auto corpus = synth::generate({.n = 30, .seed = 3}).cases;
  EXPECT_THROW(split(corpus, {{0.5, 0.5, 0.5}, 1}), Error);
  EXPECT_THROW(split(corpus, {{-0.1, 0.6, 0.5}, 1}), Error);
  EXPECT_THROW(split({corpus.begin(), corpus.begin() + 10}, {}), Error);
}

TEST(Logistic, SeparableReachesPerfectTrainingAccuracy) {
  Rng rng(5);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
    if (std::fabs(a + b) < 0.1) continue;
    x.push_back({a, b});
    y.push_back(a + b > 0);
  }
  const auto m = fit_logistic(x, y, {.l2 = 0.0, .learning_rate = 1.0, .max_iterations = 20000});
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(m.predict(x[i]) >= 0.5, y[i] == 1);
}

TEST(Logistic, ShuffledLabelsGiveChanceAuroc) {
  auto corpus = prx::testing::preprocessed_synthetic(1000, 31);
  Rng rng(99);
  for (auto& c : corpus) c.labels = {rng.bernoulli(0.5), rng.bernoulli(0.5), false};
  const auto s = split(corpus, {});
  const auto base = logistic_baseline(s.train, s.test);
  std::vector<PredictionRecord> task;
  for (const auto& p : base.predictions) {
    if (p.task == Task::non_opioid) task.push_back(p);
  }
  EXPECT_NEAR(auroc(task), 0.5, 0.05);
}

TEST(Logistic, DuplicatingTrainingSetDoesNotChangeFit) {
  std::vector<std::vector<double>> x{{0, 1}, {1, 0}, {1, 1}, {0, 0}, {0.5, 0.2}};
  std::vector<int> y{1, 0, 1, 0, 1};
  const auto a = fit_logistic(x, y);
  auto x2 = x;
  auto y2 = y;
  x2.insert(x2.end(), x.begin(), x.end());
  y2.insert(y2.end(), y.begin(), y.end());
  const auto b = fit_logistic(x2, y2);
  ASSERT_EQ(a.weights.size(), b.weights.size());
  for (std::size_t i = 0; i < a.weights.size(); ++i) EXPECT_NEAR(a.weights[i], b.weights[i], 1e-9);
  EXPECT_NEAR(a.bias, b.bias, 1e-9);
  EXPECT_THROW(fit_logistic({}, {}), Error);
}

TEST(Logistic, NonConvergenceWarns) {
  const auto corpus = prx::testing::preprocessed_synthetic(200, 2);
  const auto s = split(corpus, {});
  const auto r = logistic_baseline(s.train, s.test, {.max_iterations = 2});
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings[0].find("NonConvergence"), std::string::npos);
  EXPECT_EQ(r.predictions.size(), 3 * s.test.size());
}

TEST(FeatureEncoder, FixedWidthAndBinned) {
  const auto corpus = prx::testing::preprocessed_synthetic(50, 2);
  const auto enc = FeatureEncoder::fit(corpus);
  for (const auto& c : corpus) {
    const auto v = enc.encode(c);
    ASSERT_EQ(v.size(), enc.names.size());
    for (double x : v) EXPECT_TRUE(x == 0.0 || x == 1.0);
  }
}

TEST(Report, CsvLayoutAndFiles) {
  const auto corpus = prx::testing::preprocessed_synthetic(300, 7);
  ProtocolConfig cfg;
  cfg.embedder.dim = 128;
  const auto r = run_protocol(corpus, cfg);
  const auto perf = performance_csv(r.report);
  EXPECT_EQ(perf.substr(0, perf.find('\n')), "task,model,accuracy,precision,recall,f1,auroc");
  EXPECT_NE(perf.find("Any opioid,RAG (stub majority),"), std::string::npos);
  EXPECT_NE(perf.find("Logistic regression"), std::string::npos);
  const auto c = ccr_csv(r.report);
  EXPECT_EQ(c.substr(0, c.find('\n')), "model,ccr_pct,exact_match_pct");
  const auto ret = retrieval_csv(r.report);
  EXPECT_EQ(ret.substr(0, ret.find('\n')), "metric,top_3,top_5,top_10");
  EXPECT_EQ(r.report.retrieval.size(), 3u);

  prx::testing::TempDir d1, d2;
  write_report(r.report, d1.path());
  write_report(run_protocol(corpus, cfg).report, d2.path());
  for (const char* f : {"performance.csv", "ccr.csv", "retrieval.csv", "report.json"}) {
    EXPECT_FALSE(slurp(d1 / f).empty()) << f;
    EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  }
  try {
    write_report({}, d1.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
}

TEST(Report, FromPredictions) {
  std::vector<PredictionRecord> ps;
  for (int i = 0; i < 10; ++i) {
    auto p = ccr_pred("r" + std::to_string(i), "x", {i % 2 ? "x" : "y"}, {rc("d", "x", 0.9)});
    p.task = Task::opioid_any;
    p.score = i / 10.0;
    p.true_label = i % 2;
    p.predicted_label = p.score >= 0.5;
    ps.push_back(p);
  }
  const auto rep = report_from_predictions(ps, "m", 0.8);
  ASSERT_EQ(rep.performance.size(), 1u);
  EXPECT_EQ(rep.performance[0].model, "m");
  ASSERT_EQ(rep.consistency.size(), 1u);
  EXPECT_DOUBLE_EQ(rep.consistency[0].ccr_pct, 100.0);
  EXPECT_DOUBLE_EQ(rep.consistency[0].exact_match_pct, 50.0);
}

TEST(PredictionRecordJson, RoundTrip) {
  auto p = ccr_pred("r1", "x", {"x", "y"}, {rc("d", "x", 0.9, 0.7)});
  p.task = Task::opioid_standard_dose;
  p.score = 0.25;
  const auto back = PredictionRecord::from_json(p.to_json());
  EXPECT_EQ(back.to_json(), p.to_json());
  EXPECT_THROW(PredictionRecord::from_json({{"record_id", "x"}}), Error);
}
