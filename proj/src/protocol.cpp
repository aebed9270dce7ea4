#include "prx/protocol.hpp"

#include <map>

#include "prx/errors.hpp"

namespace prx::eval {

std::string rag_model_name(rag::GeneratorKind kind) {
  return kind == rag::GeneratorKind::stub_majority ? "RAG (stub majority)" : "RAG (external generator)";
}

ProtocolResult run_protocol(const std::vector<CaseRecord>& corpus, const ProtocolConfig& cfg,
                            const Resources& resources) {
  cfg.retrieval.validate();
  auto note = [&](std::string_view msg) {
    if (cfg.progress) cfg.progress(msg);
  };
  ProtocolResult out;
  auto parts = split(corpus, cfg.split);
  out.train_size = parts.train.size();
  out.val_size = parts.val.size();
  out.test_size = parts.test.size();
  if (parts.train.empty() || parts.test.empty()) {
    throw Error(ErrorCode::InvalidArgument, "split produced an empty train or test partition");
  }
  for (const auto& w : parts.warnings) out.report.notes.push_back(w);
  note("split " + std::to_string(out.train_size) + "/" + std::to_string(out.val_size) + "/" +
       std::to_string(out.test_size));

  std::shared_ptr<const embedding::Encoder> encoder = embedding::make_encoder(cfg.embedder);
  auto index = std::make_shared<const index::Index>(
      rag::build_case_index(parts.train, *encoder, resources, cfg.threads));
  note("indexed " + std::to_string(index->size()) + " training cases");
  std::shared_ptr<const rag::Generator> generator = rag::make_generator(cfg.generator, resources);
  rag::Engine engine(index, encoder, generator, resources);

  rag::RecommendOptions opts;
  opts.retrieval = cfg.retrieval;
  opts.budget = cfg.budget;
  opts.clock = [] { return Timestamp{}; };
  for (const auto& c : parts.test) {
    std::optional<rag::RecommendResult> res;
    try {
      res = engine.recommend(c.patient, opts);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyPrecedent) throw;
      ++out.empty_precedent;
    }
    for (Task task : kAllTasks) {
      PredictionRecord p;
      p.record_id = c.patient.record_id;
      p.task = task;
      p.threshold = cfg.threshold;
      p.true_label = c.labels.get(task);
      p.true_treatments = c.treatments;
      if (res) {
        p.score = rag::task_score(res->recommendation, task, resources);
        if (!res->recommendation.items.empty()) p.predicted_treatment = res->recommendation.items.front().treatment;
        p.retrieval = res->retrieval;
      } else {
        RetrievalSet empty;
        empty.k = cfg.retrieval.k;
        empty.tau = cfg.retrieval.tau;
        p.retrieval = empty;
      }
      p.predicted_label = p.score >= p.threshold;
      out.rag_predictions.push_back(std::move(p));
    }
  }
  if (out.empty_precedent > 0) {
    out.report.notes.push_back(std::to_string(out.empty_precedent) +
                               " test queries had no precedent above tau and were scored 0");
  }
  note("answered " + std::to_string(parts.test.size()) + " test queries");

  const std::string rag_name = rag_model_name(cfg.generator.kind);
  auto rag_report = report_from_predictions(out.rag_predictions, rag_name, cfg.retrieval.tau, cfg.ks);
  out.rag_ccr = ccr(out.rag_predictions, cfg.retrieval.tau);
  // Retrieval metrics are capped by the retrieval depth, so rerun search at each k.
  {
    std::vector<RankedQuery> rq;
    std::vector<RetrievalSet> rs;
    std::size_t max_k = cfg.retrieval.k;
    for (std::size_t k : cfg.ks) max_k = std::max(max_k, k);
    RetrievalConfig deep = cfg.retrieval;
    deep.k = max_k;
    const auto embeddings = [&] {
      std::vector<Embedding> v;
      for (const auto& c : parts.test) {
        v.push_back(embedding::embed_record(c.patient, *encoder, resources).case_embedding);
      }
      return v;
    }();
    for (std::size_t i = 0; i < parts.test.size(); ++i) {
      auto set = index->search(embeddings[i], deep);
      if (!deep.filters.empty()) {
        const auto& q = parts.test[i].patient;
        index::QueryMetadata meta{{q.diagnoses.begin(), q.diagnoses.end()}, q.encounter_time};
        set = index->filter_rerank(index->search(embeddings[i], {index->size(), deep.tau, {}}), meta, deep.filters);
        if (set.cases.size() > max_k) set.cases.resize(max_k);
      }
      rq.push_back({parts.test[i].labels, set});
      rs.push_back(std::move(set));
    }
    rag_report.retrieval.clear();
    for (std::size_t k : cfg.ks) rag_report.retrieval.push_back({k, precision_at_k(rq, k), mean_sim_at_k(rs, k)});
  }

  out.report.decision_threshold = cfg.threshold;
  out.report.tau = cfg.retrieval.tau;
  out.report.performance = rag_report.performance;
  out.report.consistency = rag_report.consistency;
  out.report.retrieval = rag_report.retrieval;
  for (const auto& n : rag_report.notes) out.report.notes.push_back(n);

  if (cfg.run_baseline) {
    auto base = logistic_baseline(parts.train, parts.test, {}, cfg.threshold);
    for (const auto& w : base.warnings) out.report.notes.push_back(w);
    // The baseline predicts labels, not treatments; its consistency row maps the
    // predicted label vector to the most frequent training treatment carrying it.
    std::map<std::string, std::size_t> freq;
    for (const auto& c : parts.train) {
      for (const auto& t : c.treatments) ++freq[t];
    }
    auto treatment_for = [&](const OutcomeLabels& labels) -> std::optional<std::string> {
      std::optional<std::string> best;
      std::size_t best_n = 0;
      for (const auto& v : resources.treatment_labels()) {
        const auto* e = resources.treatment(v);
        if (!(e->labels == labels)) continue;
        const std::size_t n = freq.count(v) ? freq[v] : 0;
        if (!best || n > best_n) {
          best = v;
          best_n = n;
        }
      }
      return best;
    };
    for (std::size_t i = 0; i < parts.test.size(); ++i) {
      OutcomeLabels predicted;
      for (std::size_t t = 0; t < 3; ++t) {
        const auto& p = base.predictions[t * parts.test.size() + i];
        switch (p.task) {
          case Task::non_opioid: predicted.non_opioid = p.predicted_label; break;
          case Task::opioid_any: predicted.opioid_any = p.predicted_label; break;
          case Task::opioid_standard_dose: predicted.opioid_standard_dose = p.predicted_label; break;
        }
      }
      const auto treatment = treatment_for(predicted);
      for (std::size_t t = 0; t < 3; ++t) {
        auto& p = base.predictions[t * parts.test.size() + i];
        p.predicted_treatment = treatment;
        p.retrieval = out.rag_predictions[i * 3 + t].retrieval;
      }
    }
    auto base_report = report_from_predictions(base.predictions, "Logistic regression", cfg.retrieval.tau, {});
    for (auto& row : base_report.performance) out.report.performance.push_back(std::move(row));
    const auto bc = ccr(base.predictions, cfg.retrieval.tau);
    out.report.consistency.push_back({"Logistic regression", bc.ccr_pct, bc.exact_match_pct});
    out.baseline_predictions = std::move(base.predictions);
  }
  return out;
}

}  // namespace prx::eval
